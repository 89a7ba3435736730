"""Closed-form references used to cross-check the solver.

Everything in this module is straight-line numerics (closed forms, finite
differences, quadrature) deliberately written without the autodiff engine
or the networks, so it can serve as an independent referee for them.

For the 1-d linear-potential system b(x) = -x with unit noise, the most
probable transition path solves the boundary value problem

    x'' = x,    x(0) = x0,  x(T) = x1,

whose solution is x(t) = A e^t + B e^(-t) with the coefficients fixed by
the boundary conditions.  The associated control is u = x' + x and the
action along the path is 0.5 * integral of (u^2 - 1) dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynsys import SystemSpec

__all__ = [
    "AnalyticPath",
    "analytic_linear_path",
    "el_residual",
    "action_of_analytic",
    "fixed_point_residual",
    "calibrate_feed_lactose",
]


@dataclass(frozen=True)
class AnalyticPath:
    """x(t) = coef_growth * e^t + coef_decay * e^(-t) on [0, horizon]."""

    coef_growth: float
    coef_decay: float
    horizon: float

    def value(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.coef_growth * np.exp(t) + self.coef_decay * np.exp(-t)

    def derivative(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.coef_growth * np.exp(t) - self.coef_decay * np.exp(-t)

    def sample(self, n: int):
        """n+1 equispaced samples: (times, values)."""
        times = np.linspace(0.0, self.horizon, n + 1)
        return times, self.value(times)


def analytic_linear_path(x0: float, x1: float, horizon: float) -> AnalyticPath:
    """Solve the boundary value problem x'' = x, x(0)=x0, x(T)=x1."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    et = math.exp(horizon)
    emt = math.exp(-horizon)
    denom = et - emt
    a = (x1 - x0 * emt) / denom
    b = (x0 * et - x1) / denom
    return AnalyticPath(a, b, float(horizon))


def el_residual(path, samples: int = 1000, h: float = 1e-4) -> float:
    """Max |x''(t) - x(t)| over interior samples, x'' by central differences.

    Accepts anything exposing value(t) and horizon, so straight lines and
    other non-solutions can be fed in as negative controls.
    """
    times = np.linspace(0.0, path.horizon, samples + 1)[1:-1]
    second = (path.value(times - h) - 2.0 * path.value(times)
              + path.value(times + h)) / (h * h)
    return float(np.max(np.abs(second - path.value(times))))


def action_of_analytic(x0: float, x1: float, horizon: float,
                       n: int = 1000) -> float:
    """Action 0.5 * integral (u^2 - 1) dt of the analytic path, u = x' + x.

    Trapezoid quadrature on n+1 equispaced samples.  For the 0 -> 2, T = 1
    transition the closed form is (e^2 - 1)/sinh(1)^2 - 1/2 = 4.12611.
    """
    path = analytic_linear_path(x0, x1, horizon)
    times = np.linspace(0.0, horizon, n + 1)
    u = path.derivative(times) + path.value(times)
    integrand = 0.5 * (u * u - 1.0)
    dt = np.diff(times)
    return float(np.sum((integrand[1:] + integrand[:-1]) * 0.5 * dt))


def fixed_point_residual(spec: SystemSpec, x: np.ndarray) -> float:
    """|b(x)|_2: how far x is from being a fixed point of the drift."""
    b = spec.drift(np.asarray(x, dtype=np.float64))
    return float(np.sqrt(np.sum(b * b)))


def calibrate_feed_lactose(lo: float = 1e-4, hi: float = 10.0,
                           tol: float = 1e-12) -> float:
    """Find the extracellular lactose level that fixes both observed states.

    The allolactose balance at each stable state is monotone in the feed
    level L (production grows with L, losses do not depend on it), so the
    signed sum of the two dA/dt residuals crosses zero exactly once;
    bisection pins it down.  Imported lazily so this module stays
    import-independent of the system factories at module load time.
    """
    from .dynsys import (LACTOSE_HIGH_STATE, LACTOSE_LOW_STATE,
                         make_lactose_operon)

    def residual_sum(feed: float) -> float:
        spec = make_lactose_operon(noise=0.01, horizon=3.0, steps=60,
                                   feed_lactose=feed)
        return (float(spec.drift(LACTOSE_LOW_STATE)[2])
                + float(spec.drift(LACTOSE_HIGH_STATE)[2]))

    flo, fhi = residual_sum(lo), residual_sum(hi)
    if flo * fhi > 0:
        raise ValueError("bisection bracket does not straddle a root")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fmid = residual_sum(mid)
        if (fmid > 0) == (fhi > 0):
            hi, fhi = mid, fmid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)
