"""Benchmark stochastic systems, Euler transition dynamics and path costs.

A transition path problem is posed on the controlled diffusion

    dX = b(X) dt + sigma * u dt,

discretised by forward Euler with dt = T/N.  The path functional being
minimised is the Onsager-Machlup action; along a discrete path it is the
accumulated running cost

    f(s, a) = 0.5 * (|a|^2 + div b(s)) * dt

plus the terminal penalty g(x) = lam * |x - x_target|_2.

Each system provides its drift twice: a plain numpy callable used by the
environment and the oracles, and a tape-ops builder used inside
differentiable rollouts.  The two are written as the same sequence of
elementary float operations, so they agree bit for bit; a regression test
holds them to that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad

__all__ = [
    "SystemSpec",
    "Transition",
    "PathRecord",
    "BlowupError",
    "step",
    "step_node",
    "running_cost",
    "terminal_cost",
    "terminal_cost_node",
    "om_action",
    "make_linear_potential",
    "make_maier_stein",
    "make_lactose_operon",
    "LACTOSE_CONSTANTS",
    "DEFAULT_FEED_LACTOSE",
]


class BlowupError(RuntimeError):
    """The dynamics produced a non-finite state."""


@dataclass(frozen=True)
class SystemSpec:
    """Everything the solver needs to know about one transition problem."""

    name: str
    state_dim: int
    control_dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    drift_node: Callable[[ad.Var], ad.Var] | None
    divergence: Callable[[np.ndarray], float]
    noise_intensity: float
    x_start: np.ndarray
    x_target: np.ndarray
    horizon: float
    steps: int
    lam: float
    constants: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return self.horizon / self.steps


@dataclass
class Transition:
    """One environment step (s, a, r, s') tagged with its timestep index."""

    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    t_index: int


@dataclass
class PathRecord:
    """A realized trajectory: states (N+1, d) and the actions that produced it."""

    states: np.ndarray
    actions: np.ndarray


def step(spec: SystemSpec, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    """One Euler step s + b(s) dt + sigma a dt."""
    if s.shape != (spec.state_dim,):
        raise ValueError(f"state shape {s.shape}, expected ({spec.state_dim},)")
    if a.shape != (spec.control_dim,):
        raise ValueError(f"action shape {a.shape}, expected ({spec.control_dim},)")
    b = spec.drift(s)
    if not np.all(np.isfinite(b)):
        raise BlowupError(f"non-finite drift at state {s!r}")
    out = (s + b * spec.dt) + a * (spec.noise_intensity * spec.dt)
    if not np.all(np.isfinite(out)):
        raise BlowupError(f"non-finite state after step from {s!r}")
    return out


def step_node(spec: SystemSpec, s: ad.Var, a: ad.Var) -> ad.Var:
    """Tape version of step(); accepts a single state or a batch of rows."""
    b = spec.drift_node(s)
    if not np.all(np.isfinite(b.value)):
        raise BlowupError(f"non-finite drift in rollout at state {s.value!r}")
    return ad.add(ad.add(s, ad.scale(b, spec.dt)),
                  ad.scale(a, spec.noise_intensity * spec.dt))


def running_cost(spec: SystemSpec, s: np.ndarray, a: np.ndarray) -> float:
    """Discrete Onsager-Machlup running cost 0.5 (|a|^2 + div b(s)) dt."""
    return 0.5 * (float(a @ a) + spec.divergence(s)) * spec.dt


def terminal_cost(spec: SystemSpec, x: np.ndarray) -> float:
    """Terminal penalty lam * |x - x_target|_2."""
    d = x - spec.x_target
    return float(np.sqrt(np.asarray(d @ d))) * spec.lam


def terminal_cost_node(spec: SystemSpec, x: ad.Var) -> ad.Var:
    """Tape version of terminal_cost() for a single state vector."""
    target = x.tape.const(spec.x_target)
    return ad.scale(ad.l2norm(ad.sub(x, target)), spec.lam)


def om_action(spec: SystemSpec, path: PathRecord) -> float:
    """Accumulated running cost of a realized path (no terminal penalty)."""
    states, actions = path.states, path.actions
    if states.shape[0] != actions.shape[0] + 1:
        raise ValueError(
            f"path has {states.shape[0]} states for {actions.shape[0]} actions"
        )
    total = 0.0
    for k in range(actions.shape[0]):
        total += running_cost(spec, states[k], actions[k])
    return total


# ---------------------------------------------------------------------------
# linear potential well: b(x) = -x
# ---------------------------------------------------------------------------


def _linear_drift(x: np.ndarray) -> np.ndarray:
    return -x


def _linear_drift_node(x: ad.Var) -> ad.Var:
    return ad.neg(x)


def make_linear_potential(x0: float, x1: float, horizon: float, steps: int,
                          lam: float = 10.0) -> SystemSpec:
    """1-d Ornstein-Uhlenbeck-type system b(x) = -x with unit noise.

    The most probable path between x0 and x1 solves the boundary value
    problem x'' = x, which makes this the analytically checkable benchmark.
    """
    _validate_common(horizon, steps, lam)
    return SystemSpec(
        name="linear",
        state_dim=1,
        control_dim=1,
        drift=_linear_drift,
        drift_node=_linear_drift_node,
        divergence=lambda x: -1.0,
        noise_intensity=1.0,
        x_start=np.array([float(x0)]),
        x_target=np.array([float(x1)]),
        horizon=float(horizon),
        steps=int(steps),
        lam=float(lam),
        constants={"x0": float(x0), "x1": float(x1)},
    )


# ---------------------------------------------------------------------------
# Maier-Stein model
# ---------------------------------------------------------------------------


def make_maier_stein(beta: float, noise: float, horizon: float, steps: int,
                     lam: float = 10.0) -> SystemSpec:
    """2-d Maier-Stein system.

        b(x, y) = (x - x^3 - beta x y^2, -(1 + x^2) y)

    Metastable states sit at (+-1, 0) with a saddle at the origin; beta
    controls how non-gradient the force field is.  The transition of
    interest runs from (-1, 0) to (1, 0).
    """
    _validate_common(horizon, steps, lam)
    beta = float(beta)
    noise = float(noise)
    if noise <= 0:
        raise ValueError("noise must be positive")

    def drift(s: np.ndarray) -> np.ndarray:
        x = s[..., 0]
        y = s[..., 1]
        x2 = x * x
        y2 = y * y
        bx = x - x * x2 - (x * y2) * beta
        by = -((1.0 + x2) * y)
        return np.stack((bx, by), axis=-1)

    def drift_node(s: ad.Var) -> ad.Var:
        x = ad.component(s, 0)
        y = ad.component(s, 1)
        x2 = ad.square(x)
        y2 = ad.square(y)
        bx = ad.sub(ad.sub(x, ad.mul(x, x2)), ad.scale(ad.mul(x, y2), beta))
        by = ad.neg(ad.mul(ad.add_const(x2, 1.0), y))
        return ad.combine([bx, by])

    def divergence(s: np.ndarray) -> float:
        x, y = float(s[0]), float(s[1])
        return -4.0 * x * x - beta * y * y

    return SystemSpec(
        name="maier-stein",
        state_dim=2,
        control_dim=2,
        drift=drift,
        drift_node=drift_node,
        divergence=divergence,
        noise_intensity=noise,
        x_start=np.array([-1.0, 0.0]),
        x_target=np.array([1.0, 0.0]),
        horizon=float(horizon),
        steps=int(steps),
        lam=float(lam),
        constants={"beta": beta},
    )


# ---------------------------------------------------------------------------
# lactose operon model
# ---------------------------------------------------------------------------

# Kinetic constants as tabulated in the source model (Yildirim-Mackey);
# concentrations quoted in mM except where noted.
LACTOSE_CONSTANTS: dict[str, float] = {
    "alpha_m": 997.0,      # nM / min
    "alpha_b": 1.66e-2,    # 1 / min
    "alpha_a": 1.76e4,     # 1 / min
    "gamma_m": 0.411,      # 1 / min
    "gamma_b": 8.33e-4,    # 1 / min
    "gamma_a": 1.35e-2,    # 1 / min
    "mu": 3.03e-2,         # 1 / min
    "mu_max": 3.47e-2,     # 1 / min (growth-rate cap; not used by the drift)
    "hill_n": 2.0,
    "k_half": 7200.0,      # dimensionless
    "k1": 2.52e-2,         # (uM)^-2
    "k_l": 0.97,           # mM
    "k_a": 1.95,           # mM
    "beta_a": 2.15e4,      # 1 / min
    "tau_m": 0.10,         # min
    "tau_b": 2.0,          # min
}

# Extracellular lactose level; calibrated so that the two observed stable
# states below are (near-)fixed points of the drift.  See
# oracle.calibrate_feed_lactose for the one-dimensional search that
# produced this value.
DEFAULT_FEED_LACTOSE = 0.0499677

LACTOSE_LOW_STATE = np.array([4.57e-7, 2.29e-7, 4.27e-3])
LACTOSE_HIGH_STATE = np.array([3.28e-5, 1.65e-5, 6.47e-2])


def make_lactose_operon(noise: float, horizon: float, steps: int,
                        lam: float = 10.0,
                        feed_lactose: float = DEFAULT_FEED_LACTOSE,
                        **overrides: float) -> SystemSpec:
    """3-d lactose operon model (mRNA M, beta-galactosidase B, allolactose A).

        dM/dt = alpha_m (1 + K1 (e^(-mu tau_m) A)^2) / (K + K1 (e^(-mu tau_m) A)^2)
                - (gamma_m + mu) M
        dB/dt = alpha_b e^(-mu tau_b) M - (gamma_b + mu) B
        dA/dt = alpha_a B L / (K_l + L) - beta_a B A / (K_a + A) - (gamma_a + mu) A

    Delayed arguments are evaluated at the current time; the e^(-mu tau)
    attenuation factors are kept.  Concentrations are in mM: alpha_m is
    quoted in nM/min and K1 in (uM)^-2, both converted internally.  The
    transition of interest runs from the low-expression stable state to the
    high-expression one.
    """
    _validate_common(horizon, steps, lam)
    noise = float(noise)
    if noise <= 0:
        raise ValueError("noise must be positive")
    c = dict(LACTOSE_CONSTANTS)
    for key, val in overrides.items():
        if key not in c:
            raise ValueError(f"unknown lactose constant {key!r}")
        c[key] = float(val)
    if c["hill_n"] != 2.0:
        raise ValueError("hill_n: only the quadratic Hill exponent is supported")
    feed = float(feed_lactose)
    if c["k_l"] + feed <= 0:
        raise ValueError("feed_lactose: K_l + L must be positive")

    alpha_m = c["alpha_m"] * 1e-6          # nM/min -> mM/min
    k1 = c["k1"] * 1e6                     # (uM)^-2 -> (mM)^-2
    k = c["k_half"]
    k_a = c["k_a"]
    gm = c["gamma_m"] + c["mu"]
    gb = c["gamma_b"] + c["mu"]
    ga = c["gamma_a"] + c["mu"]
    decay_m = math.exp(-c["mu"] * c["tau_m"])
    ab = c["alpha_b"] * math.exp(-c["mu"] * c["tau_b"])
    feed_rate = c["alpha_a"] * feed / (c["k_l"] + feed)
    beta_a = c["beta_a"]

    def drift(s: np.ndarray) -> np.ndarray:
        m = s[..., 0]
        b = s[..., 1]
        a = s[..., 2]
        if np.any(k_a + a <= 0.0):
            raise BlowupError(
                f"state outside physical domain: K_a + A <= 0 at {s!r}")
        za = decay_m * a
        z = (za * za) * k1
        bm = ((1.0 + z) / (k + z)) * alpha_m - m * gm
        bb = m * ab - b * gb
        ba = (b * feed_rate - (b * (a / (k_a + a))) * beta_a) - a * ga
        return np.stack((bm, bb, ba), axis=-1)

    def drift_node(s: ad.Var) -> ad.Var:
        m = ad.component(s, 0)
        b = ad.component(s, 1)
        a = ad.component(s, 2)
        if np.any(k_a + a.value <= 0.0):
            raise BlowupError(
                f"state outside physical domain: K_a + A <= 0 at {s.value!r}"
            )
        z = ad.scale(ad.square(ad.scale(a, decay_m)), k1)
        bm = ad.sub(ad.scale(ad.div(ad.add_const(z, 1.0), ad.add_const(z, k)),
                             alpha_m),
                    ad.scale(m, gm))
        bb = ad.sub(ad.scale(m, ab), ad.scale(b, gb))
        ba = ad.sub(ad.sub(ad.scale(b, feed_rate),
                           ad.scale(ad.mul(b, ad.div(a, ad.add_const(a, k_a))),
                                    beta_a)),
                    ad.scale(a, ga))
        return ad.combine([bm, bb, ba])

    def divergence(s: np.ndarray) -> float:
        b, a = float(s[1]), float(s[2])
        den = k_a + a
        if den <= 0.0:
            raise BlowupError(
                f"state outside physical domain: K_a + A <= 0 at {s!r}")
        return -(gm + gb + ga) - beta_a * b * k_a / (den * den)

    return SystemSpec(
        name="lactose",
        state_dim=3,
        control_dim=3,
        drift=drift,
        drift_node=drift_node,
        divergence=divergence,
        noise_intensity=noise,
        x_start=LACTOSE_LOW_STATE.copy(),
        x_target=LACTOSE_HIGH_STATE.copy(),
        horizon=float(horizon),
        steps=int(steps),
        lam=float(lam),
        constants={**c, "feed_lactose": feed},
    )


def _validate_common(horizon: float, steps: int, lam: float) -> None:
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if lam <= 0:
        raise ValueError("lam must be positive")
