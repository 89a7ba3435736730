"""Self-contained SVG plots for run artifacts.

No plotting dependency: each figure is assembled from <line>, <polyline> and
<text> elements with fixed float formatting, so rendering the same artifacts
twice produces byte-identical files.
"""

import os

import numpy as np

from ..oracle import analytic_linear_path
from .config import load_config
from .runner import ArtifactError, load_episode_table, load_mean_path

PANEL_W = 360
PANEL_H = 300
MARGIN_L = 58
MARGIN_R = 14
MARGIN_T = 34
MARGIN_B = 44

LEARNED_COLOR = "#1f77b4"
ANALYTIC_COLOR = "#d62728"

PLOT_FILES = ("path.svg", "running_cost.svg", "critic_loss.svg",
              "terminal_loss.svg")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def _limits(values: np.ndarray) -> tuple[float, float]:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return -1.0, 1.0
    lo = float(finite.min())
    hi = float(finite.max())
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


class _Panel:
    """One set of axes at a pixel offset, mapping data to pixel space."""

    def __init__(self, x_off, xlim, ylim, xlabel, ylabel, title):
        self.x_off = x_off
        self.xlim = xlim
        self.ylim = ylim
        self.x0 = x_off + MARGIN_L
        self.x1 = x_off + PANEL_W - MARGIN_R
        self.y0 = MARGIN_T
        self.y1 = PANEL_H - MARGIN_B
        self.parts: list[str] = []
        self._frame(xlabel, ylabel, title)

    def _px(self, x: float) -> float:
        lo, hi = self.xlim
        return self.x0 + (x - lo) / (hi - lo) * (self.x1 - self.x0)

    def _py(self, y: float) -> float:
        lo, hi = self.ylim
        return self.y1 - (y - lo) / (hi - lo) * (self.y1 - self.y0)

    def _frame(self, xlabel, ylabel, title) -> None:
        p = self.parts
        p.append(
            f'<rect x="{_fmt(self.x0)}" y="{_fmt(self.y0)}" '
            f'width="{_fmt(self.x1 - self.x0)}" '
            f'height="{_fmt(self.y1 - self.y0)}" '
            f'fill="none" stroke="#333333" stroke-width="1"/>')
        for tick in np.linspace(self.xlim[0], self.xlim[1], 5):
            px = self._px(tick)
            p.append(f'<line x1="{_fmt(px)}" y1="{_fmt(self.y1)}" '
                     f'x2="{_fmt(px)}" y2="{_fmt(self.y1 + 4)}" '
                     f'stroke="#333333" stroke-width="1"/>')
            p.append(f'<text x="{_fmt(px)}" y="{_fmt(self.y1 + 16)}" '
                     f'text-anchor="middle">{_tick_label(tick)}</text>')
        for tick in np.linspace(self.ylim[0], self.ylim[1], 5):
            py = self._py(tick)
            p.append(f'<line x1="{_fmt(self.x0 - 4)}" y1="{_fmt(py)}" '
                     f'x2="{_fmt(self.x0)}" y2="{_fmt(py)}" '
                     f'stroke="#333333" stroke-width="1"/>')
            p.append(f'<text x="{_fmt(self.x0 - 7)}" y="{_fmt(py + 4)}" '
                     f'text-anchor="end">{_tick_label(tick)}</text>')
        mid_x = (self.x0 + self.x1) / 2
        p.append(f'<text x="{_fmt(mid_x)}" y="{_fmt(self.y1 + 32)}" '
                 f'text-anchor="middle">{xlabel}</text>')
        p.append(f'<text x="{_fmt(self.x_off + 14)}" '
                 f'y="{_fmt((self.y0 + self.y1) / 2)}" '
                 f'text-anchor="middle" transform="rotate(-90 '
                 f'{_fmt(self.x_off + 14)} '
                 f'{_fmt((self.y0 + self.y1) / 2)})">{ylabel}</text>')
        p.append(f'<text x="{_fmt(mid_x)}" y="{_fmt(self.y0 - 12)}" '
                 f'text-anchor="middle" font-weight="bold">{title}</text>')

    def polyline(self, xs, ys, color, dashed=False) -> None:
        pts = []
        for x, y in zip(xs, ys):
            if np.isfinite(x) and np.isfinite(y):
                pts.append(f"{_fmt(self._px(float(x)))},"
                           f"{_fmt(self._py(float(y)))}")
        if not pts:
            return
        dash = ' stroke-dasharray="6 4"' if dashed else ""
        self.parts.append(
            f'<polyline points="{" ".join(pts)}" fill="none" '
            f'stroke="{color}" stroke-width="1.5"{dash}/>')

    def label(self, text, color, slot) -> None:
        y = self.y0 + 14 + 14 * slot
        x = self.x1 - 8
        self.parts.append(
            f'<line x1="{_fmt(x - 48)}" y1="{_fmt(y - 4)}" '
            f'x2="{_fmt(x - 28)}" y2="{_fmt(y - 4)}" '
            f'stroke="{color}" stroke-width="1.5"/>')
        self.parts.append(
            f'<text x="{_fmt(x - 24)}" y="{_fmt(y)}" '
            f'text-anchor="start">{text}</text>')


def _svg(width: int, height: int, parts: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}" '
        f'font-family="sans-serif" font-size="11">')
    background = f'<rect width="{width}" height="{height}" fill="#ffffff"/>'
    return "\n".join([head, background] + parts + ["</svg>"]) + "\n"


def render_path_plot(times, path, target, analytic=None) -> str:
    """Component-vs-time panels, one per state dimension, with optional
    analytic overlay (same grid) drawn dashed."""
    d = path.shape[1]
    parts: list[str] = []
    for j in range(d):
        ys = [path[:, j]]
        if analytic is not None:
            ys.append(analytic[:, j])
        ylim = _limits(np.concatenate(ys + [np.array([target[j]])]))
        panel = _Panel(j * PANEL_W, _limits(times), ylim,
                       "t", f"x_{j + 1}", f"component {j + 1}" if d > 1
                       else "transition path")
        panel.polyline(times, path[:, j], LEARNED_COLOR)
        if analytic is not None:
            panel.polyline(times, analytic[:, j], ANALYTIC_COLOR, dashed=True)
            panel.label("learned", LEARNED_COLOR, 0)
            panel.label("analytic", ANALYTIC_COLOR, 1)
        parts.extend(panel.parts)
    return _svg(PANEL_W * d, PANEL_H, parts)


def render_series_plot(episodes, values, ylabel, title) -> str:
    panel = _Panel(0, _limits(np.asarray(episodes, dtype=float)),
                   _limits(np.asarray(values)), "episode", ylabel, title)
    panel.polyline(episodes, values, LEARNED_COLOR)
    return _svg(PANEL_W, PANEL_H, panel.parts)


def emit_plots(artifacts_dir, out_dir=None,
               compare_analytic: bool | None = None) -> list[str]:
    """Render the four figures for a finished run directory.

    Returns the written paths.  compare_analytic=None defers to the run's
    config; the overlay only applies to the linear system.
    """
    for name in ("config.ini", "episodes.csv", "mean_path.csv"):
        if not os.path.exists(os.path.join(artifacts_dir, name)):
            raise ArtifactError(
                f"missing artifact {name} under {artifacts_dir}")
    out_dir = artifacts_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    cfg = load_config(os.path.join(artifacts_dir, "config.ini"))
    table = load_episode_table(os.path.join(artifacts_dir, "episodes.csv"))
    times, path = load_mean_path(os.path.join(artifacts_dir, "mean_path.csv"))

    if compare_analytic is None:
        compare_analytic = cfg.compare_analytic
    analytic = None
    if compare_analytic and cfg.kind == "linear":
        ap = analytic_linear_path(cfg.system["x0"], cfg.system["x1"],
                                  cfg.system["horizon"])
        analytic = ap.value(times).reshape(-1, 1)

    spec = cfg.build_system()
    written = []
    figures = [
        ("path.svg", render_path_plot(times, path, spec.x_target, analytic)),
        ("running_cost.svg", render_series_plot(
            table["episode"], table["running_cost_sum"],
            "accumulated running cost", "running cost per episode")),
        ("critic_loss.svg", render_series_plot(
            table["episode"], table["critic_loss"],
            "critic loss", "critic loss per episode")),
        ("terminal_loss.svg", render_series_plot(
            table["episode"], table["terminal_loss"],
            "terminal loss", "terminal loss per episode")),
    ]
    for name, svg in figures:
        dest = os.path.join(out_dir, name)
        with open(dest, "w") as fh:
            fh.write(svg)
        written.append(dest)
    return written
