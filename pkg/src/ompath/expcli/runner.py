"""Run experiments from configs and persist the artifacts.

A run directory holds:

    config.ini     the fully resolved config (reload gives identical values)
    episodes.csv   one row per episode: costs and losses
    mean_path.csv  the window-averaged transition path on the time grid
    checkpoint.txt trained actor and critic
    summary.json   headline statistics, deterministic (sorted keys, no clocks)

Every artifact is written via repr() floats so re-running the same config and
seed reproduces the files byte for byte.
"""

import csv
import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..dynsys import terminal_cost
from ..tpddpg import TrainResult, train
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig

log = logging.getLogger(__name__)

EPISODE_COLUMNS = ("episode", "running_cost_sum", "critic_loss",
                   "terminal_loss", "total_cost")

# Episode range whose per-episode average terminal loss feeds the sweep
# statistics (inclusive ends).
SWEEP_STAT_EPISODES = (20, 100)


class ArtifactError(RuntimeError):
    """An artifact failed its write-then-reload validation."""


@dataclasses.dataclass
class RunArtifacts:
    """Paths of everything a run wrote, plus the in-memory result."""

    out_dir: str
    config_path: str
    episodes_path: str
    mean_path_path: str
    checkpoint_path: str
    summary_path: str
    result: TrainResult
    summary: dict


def _fmt(value: float) -> str:
    return repr(float(value))


def run_experiment(cfg: ExperimentConfig, out_dir) -> RunArtifacts:
    """Train per the config and write the artifact set into out_dir."""
    spec = cfg.build_system()
    result = train(spec, cfg.hyper, avg_window=cfg.window)

    for lg in result.episodes:
        if lg.diverged or not np.isfinite(lg.total_cost):
            continue
        realized = terminal_cost(spec, lg.path.states[spec.steps])
        if lg.total_cost != lg.running_cost_sum + realized:
            raise ArtifactError(
                f"episode {lg.episode}: total cost fails the "
                f"running-plus-terminal identity")

    os.makedirs(out_dir, exist_ok=True)
    config_path = os.path.join(out_dir, "config.ini")
    episodes_path = os.path.join(out_dir, "episodes.csv")
    mean_path_path = os.path.join(out_dir, "mean_path.csv")
    checkpoint_path = os.path.join(out_dir, "checkpoint.txt")
    summary_path = os.path.join(out_dir, "summary.json")

    with open(config_path, "w") as fh:
        fh.write(cfg.to_ini())

    with open(episodes_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPISODE_COLUMNS)
        for lg in result.episodes:
            writer.writerow([lg.episode, _fmt(lg.running_cost_sum),
                             _fmt(lg.critic_loss), _fmt(lg.terminal_loss),
                             _fmt(lg.total_cost)])

    mean = result.mean_path
    with open(mean_path_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x_{i + 1}" for i in range(spec.state_dim)])
        for i in range(spec.steps + 1):
            writer.writerow([_fmt(mean.times[i])]
                            + [_fmt(v) for v in mean.states[i]])

    save_checkpoint(result.actor, result.critic, checkpoint_path)

    lo, hi = cfg.window
    window_logs = [lg for lg in result.episodes[lo:hi + 1] if not lg.diverged]
    window_running = float(np.mean(
        [lg.running_cost_sum for lg in window_logs]))
    window_terminal = float(np.mean([lg.terminal_loss for lg in window_logs]))
    endpoint_miss = float(np.linalg.norm(
        mean.states[-1] - spec.x_target))
    summary = {
        "system": cfg.kind,
        "episodes": cfg.hyper.episodes,
        "seed": cfg.hyper.seed,
        "steps": spec.steps,
        "horizon": spec.horizon,
        "window": [lo, hi],
        "diverged_episodes": result.diverged_episodes,
        "window_mean_running_cost": window_running,
        "window_mean_terminal_loss": window_terminal,
        "mean_path_endpoint_miss": endpoint_miss,
        "final_terminal_loss": float(result.episodes[-1].terminal_loss),
    }
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    _validate_artifacts(episodes_path, mean_path_path, checkpoint_path,
                        result, cfg)

    return RunArtifacts(
        out_dir=str(out_dir), config_path=config_path,
        episodes_path=episodes_path, mean_path_path=mean_path_path,
        checkpoint_path=checkpoint_path, summary_path=summary_path,
        result=result, summary=summary)


def _validate_artifacts(episodes_path, mean_path_path, checkpoint_path,
                        result: TrainResult, cfg: ExperimentConfig) -> None:
    """Reload every artifact and check it against the in-memory run."""
    table = load_episode_table(episodes_path)
    if len(table["episode"]) != cfg.hyper.episodes:
        raise ArtifactError(
            f"{episodes_path}: {len(table['episode'])} rows written, "
            f"configured {cfg.hyper.episodes} episodes")
    for i in range(len(table["episode"])):
        total = table["total_cost"][i]
        running = table["running_cost_sum"][i]
        if np.isfinite(total) and total - running < -1e-12:
            raise ArtifactError(
                f"{episodes_path}: row {i} has total cost below its running "
                f"cost; the terminal cost can never be negative")
        if np.isfinite(running) and running != result.episodes[i].running_cost_sum:
            raise ArtifactError(
                f"{episodes_path}: row {i} does not round-trip")

    times, path = load_mean_path(mean_path_path)
    if not np.array_equal(path, result.mean_path.states):
        raise ArtifactError(f"{mean_path_path}: path does not round-trip")
    if not np.array_equal(times, result.mean_path.times):
        raise ArtifactError(f"{mean_path_path}: times do not round-trip")

    actor, critic = load_checkpoint(checkpoint_path)
    for before, after in zip(result.actor.parameters(), actor.parameters()):
        if not np.array_equal(before, after):
            raise ArtifactError(
                f"{checkpoint_path}: actor does not round-trip")
    for before, after in zip(result.critic.parameters(), critic.parameters()):
        if not np.array_equal(before, after):
            raise ArtifactError(
                f"{checkpoint_path}: critic does not round-trip")


def load_episode_table(path) -> dict:
    """Read episodes.csv into {column: np.ndarray} (episode stays int)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != EPISODE_COLUMNS:
            raise ArtifactError(
                f"{path}: unexpected header {header!r}")
        rows = list(reader)
    table = {"episode": np.array([int(r[0]) for r in rows], dtype=int)}
    for j, name in enumerate(EPISODE_COLUMNS[1:], start=1):
        table[name] = np.array([float(r[j]) for r in rows])
    return table


def load_mean_path(path) -> tuple[np.ndarray, np.ndarray]:
    """Read mean_path.csv; returns (times, states) arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "t" or not all(
                h == f"x_{i + 1}" for i, h in enumerate(header[1:])):
            raise ArtifactError(f"{path}: unexpected header {header!r}")
        rows = [[float(v) for v in r] for r in reader]
    data = np.array(rows)
    return data[:, 0], data[:, 1:]


def _converged_terminal_stats(result: TrainResult) -> tuple:
    """Mean/std/max over the stat window of each episode's average early
    terminal loss (prediction losses at the first eleven timesteps)."""
    lo, hi = SWEEP_STAT_EPISODES
    vals = [float(np.mean(lg.early_terminal_losses))
            for lg in result.episodes[lo:hi + 1] if not lg.diverged]
    if not vals:
        return float("nan"), float("nan"), float("nan")
    arr = np.array(vals)
    return float(arr.mean()), float(arr.std()), float(arr.max())


def _sweep_one(args) -> dict:
    cfg, n = args
    run_cfg = cfg.replace(steps=n)
    spec = run_cfg.build_system()
    result = train(spec, run_cfg.hyper, avg_window=run_cfg.window)
    mean, std, peak = _converged_terminal_stats(result)
    return {
        "steps": n,
        "mean": mean,
        "std": std,
        "max": peak,
        "diverged_episodes": result.diverged_episodes,
    }


def terminal_loss_sweep(cfg: ExperimentConfig, n_values,
                        workers: int | None = None) -> list[dict]:
    """Train once per N (same horizon, same seed) and tabulate how the
    converged terminal loss depends on the grid resolution."""
    n_values = [int(n) for n in n_values]
    for n in n_values:
        if n < 1:
            raise ValueError(f"sweep steps must be positive, got {n}")
    lo, hi = SWEEP_STAT_EPISODES
    if cfg.hyper.episodes <= hi:
        raise ValueError(
            f"sweep needs at least {hi + 1} episodes to compute its "
            f"statistics window, configured {cfg.hyper.episodes}")

    jobs = [(cfg, n) for n in n_values]
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = []
        for job in jobs:
            rows.append(_sweep_one(job))
            log.info("sweep N=%d: mean %.4g, std %.4g, max %.4g",
                     rows[-1]["steps"], rows[-1]["mean"], rows[-1]["std"],
                     rows[-1]["max"])
    return rows


def write_sweep_table(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["steps", "mean", "std", "max", "diverged_episodes"])
        for row in rows:
            writer.writerow([row["steps"], _fmt(row["mean"]),
                             _fmt(row["std"]), _fmt(row["max"]),
                             row["diverged_episodes"]])
