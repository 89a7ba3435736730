"""Command-line entry point.

Subcommands:

    run      train from a config file and write run artifacts
    sweep-n  repeat a config across several grid resolutions N
    plot     render the four SVG figures for a finished run directory
    verify   run the training-free correctness checks for a config

Exit codes: 0 success, 1 config error, 2 training divergence or failed
verification, 3 I/O error.
"""

import argparse
import logging
import os
import sys

import numpy as np

from ..dynsys import BlowupError, step, terminal_cost
from ..nn import init_actor
from ..oracle import (
    action_of_analytic,
    analytic_linear_path,
    el_residual,
    fixed_point_residual,
)
from ..tpddpg import terminal_predict
from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .plots import emit_plots
from .runner import (
    ArtifactError,
    run_experiment,
    terminal_loss_sweep,
    write_sweep_table,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ompath",
        description="Most probable transition pathways via "
                    "terminal-prediction actor-critic training.")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's seed")
    parser.add_argument("--out", default=None,
                        help="output directory (default: runs/<config name>)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train and write artifacts")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser(
        "sweep-n", help="train across several values of the step count N")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--n", required=True,
                         help="comma-separated step counts, e.g. 20,40,80,160")
    p_sweep.add_argument("--workers", type=int, default=None,
                         help="parallel training processes (default: serial)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_plot = sub.add_parser("plot", help="render SVG figures for a run")
    p_plot.add_argument("artifacts_dir")
    p_plot.add_argument("--compare-analytic", action="store_true",
                        default=None,
                        help="overlay the closed-form path (linear system)")
    p_plot.set_defaults(func=cmd_plot)

    p_verify = sub.add_parser(
        "verify", help="training-free correctness checks for a config")
    p_verify.add_argument("config")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def _default_out(config_path: str, suffix: str = "") -> str:
    stem = os.path.splitext(os.path.basename(config_path))[0]
    return os.path.join("runs", stem + suffix)


def _load(args) -> "ExperimentConfig":
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out_dir = args.out or _default_out(args.config)
    artifacts = run_experiment(cfg, out_dir)
    for key in ("window_mean_running_cost", "window_mean_terminal_loss",
                "mean_path_endpoint_miss", "diverged_episodes"):
        print(f"{key} = {artifacts.summary[key]}")
    print(f"artifacts written to {artifacts.out_dir}")
    if artifacts.result.failed:
        print("training diverged in most episodes", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    try:
        n_values = [int(part) for part in args.n.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"--n: expected comma-separated integers, "
                          f"got {args.n!r}") from None
    if not n_values:
        raise ConfigError("--n: no step counts given")
    try:
        rows = terminal_loss_sweep(cfg, n_values, workers=args.workers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = args.out or _default_out(args.config, "-sweep")
    os.makedirs(out_dir, exist_ok=True)
    table_path = os.path.join(out_dir, "sweep.csv")
    write_sweep_table(rows, table_path)
    print(f"{'N':>6} {'mean':>12} {'std':>12} {'max':>12}")
    for row in rows:
        print(f"{row['steps']:>6} {row['mean']:>12.6g} "
              f"{row['std']:>12.6g} {row['max']:>12.6g}")
    print(f"table written to {table_path}")
    episodes = cfg.hyper.episodes
    if any(row["diverged_episodes"] * 2 > episodes for row in rows):
        print("a sweep run diverged in most episodes", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_plot(args) -> int:
    written = emit_plots(args.artifacts_dir, out_dir=args.out,
                         compare_analytic=args.compare_analytic)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _sample_states(spec) -> np.ndarray:
    """In-domain probe states: the segment between endpoints plus jitter."""
    rng = np.random.default_rng(7)
    base = np.linspace(0.0, 1.0, 7)[:, None]
    states = spec.x_start + base * (spec.x_target - spec.x_start)
    jitter = 1.0 + 0.05 * rng.standard_normal(states.shape)
    return np.vstack([states, states[1:-1] * jitter[1:-1]])


def _fd_divergence(spec, x: np.ndarray) -> float:
    scale = np.abs(spec.x_start) + np.abs(spec.x_target)
    total = 0.0
    for j in range(spec.state_dim):
        h = 1e-6 * max(abs(x[j]), scale[j] if scale[j] > 0 else 1.0)
        plus = x.copy()
        minus = x.copy()
        plus[j] += h
        minus[j] -= h
        total += (spec.drift(plus)[j] - spec.drift(minus)[j]) / (2.0 * h)
    return total


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.build_system()
    checks: list[tuple[str, bool, str]] = []

    worst = 0.0
    for x in _sample_states(spec):
        exact = spec.divergence(x)
        approx = _fd_divergence(spec, x)
        rel = abs(exact - approx) / max(abs(exact), 1.0)
        worst = max(worst, rel)
    checks.append(("divergence matches the finite-difference Jacobian trace",
                   worst <= 1e-4, f"max rel err {worst:.3g}"))

    actor = init_actor(spec.state_dim, spec.control_dim,
                       cfg.hyper.hidden_width, cfg.hyper.action_bound, 123)
    mismatch = 0
    for i, x in enumerate(_sample_states(spec)):
        k = i % spec.steps
        pred = terminal_predict(spec, actor, x, k)
        s = x.copy()
        blew_up = False
        for _ in range(k, spec.steps):
            try:
                s = step(spec, s, actor.forward(s))
            except BlowupError:
                blew_up = True
                break
        if not np.array_equal(pred.terminal_state, s):
            mismatch += 1
        if pred.diverged != blew_up:
            mismatch += 1
        if not blew_up and pred.loss != terminal_cost(spec, s):
            mismatch += 1
    checks.append(("terminal prediction equals the step-by-step rollout",
                   mismatch == 0, f"{mismatch} mismatches"))

    if cfg.kind == "linear":
        x0, x1 = cfg.system["x0"], cfg.system["x1"]
        horizon = cfg.system["horizon"]
        path = analytic_linear_path(x0, x1, horizon)
        boundary = max(abs(path.value(0.0) - x0),
                       abs(path.value(horizon) - x1))
        checks.append(("analytic path hits both boundary conditions",
                       boundary <= 1e-12, f"max miss {boundary:.3g}"))
        residual = el_residual(path)
        checks.append(("analytic path satisfies the stationarity equation",
                       residual <= 1e-6, f"residual {residual:.3g}"))
        coarse = action_of_analytic(x0, x1, horizon, 1000)
        fine = action_of_analytic(x0, x1, horizon, 2000)
        checks.append(("action quadrature converges",
                       abs(fine - coarse) <= 1e-5,
                       f"|S(2000) - S(1000)| = {abs(fine - coarse):.3g}"))
        start_res = fixed_point_residual(spec, np.zeros(1))
        checks.append(("origin is a fixed point of the drift",
                       start_res == 0.0, f"residual {start_res:.3g}"))
    else:
        # A quarter of the way along the segment: off any fixed point
        # (the segment midpoint is the Maier-Stein saddle).
        generic = spec.x_start + 0.25 * (spec.x_target - spec.x_start)
        ref = fixed_point_residual(spec, generic)
        for name, x in (("start", spec.x_start), ("target", spec.x_target)):
            res = fixed_point_residual(spec, x)
            ratio = res / ref if ref > 0 else float("inf")
            tol = 1e-2 if cfg.kind == "lactose" else 1e-12
            checks.append(
                (f"{name} state is metastable (drift residual ratio)",
                 ratio <= tol, f"ratio {ratio:.3g}"))

    failed = 0
    for name, ok, detail in checks:
        status = "ok  " if ok else "FAIL"
        if not ok:
            failed += 1
        print(f"{status} {name}: {detail}")
    if failed:
        print(f"{failed} of {len(checks)} checks failed", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArtifactError, CheckpointError) as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BlowupError as exc:
        print(f"dynamics blew up: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
