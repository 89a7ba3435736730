"""Experiment configuration: INI files with one section per concern.

A config has three sections:

    [system]   which dynamics to solve and its constants
    [agent]    training hyperparameters
    [run]      seed, averaging window, comparison flags

Unknown sections or keys are rejected so that typos fail loudly instead of
silently falling back to defaults.
"""

import configparser
import dataclasses
import os

from ..dynsys import (
    LACTOSE_CONSTANTS,
    SystemSpec,
    make_lactose_operon,
    make_linear_potential,
    make_maier_stein,
)
from ..tpddpg import Hyperparams

SYSTEM_KINDS = ("linear", "maier-stein", "lactose")

# Keys accepted in [system] per kind, beyond the common ones.  The lactose
# model additionally accepts every kinetic constant by name, so a config
# can pin or override the full rate table.
_COMMON_SYSTEM_KEYS = ("kind", "horizon", "steps", "terminal_weight")
_SYSTEM_KEYS = {
    "linear": _COMMON_SYSTEM_KEYS + ("x0", "x1"),
    "maier-stein": _COMMON_SYSTEM_KEYS + ("beta", "eps"),
    "lactose": _COMMON_SYSTEM_KEYS + ("eps", "feed_lactose")
               + tuple(sorted(LACTOSE_CONSTANTS)),
}
_SYSTEM_REQUIRED = {
    "linear": ("x0", "x1"),
    "maier-stein": ("beta", "eps"),
    "lactose": ("eps",),
}

_AGENT_KEYS = (
    "episodes",
    "batch_size",
    "warmup_trajectories",
    "exploration_std",
    "actor_lr",
    "critic_lr",
    "hidden_width",
    "action_bound",
    "buffer_capacity",
)

_RUN_KEYS = ("seed", "window_lo", "window_hi", "compare_analytic")


class ConfigError(ValueError):
    """Raised for unreadable, unparseable, or invalid experiment configs."""


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description.

    system holds the [system] constants keyed by config name (horizon,
    steps, terminal_weight plus the kind-specific ones), already coerced
    to float/int.
    """

    kind: str
    system: dict
    hyper: Hyperparams
    window: tuple
    compare_analytic: bool = False

    @property
    def seed(self):
        return self.hyper.seed

    def build_system(self) -> SystemSpec:
        s = self.system
        if self.kind == "linear":
            return make_linear_potential(
                x0=s["x0"], x1=s["x1"], horizon=s["horizon"],
                steps=s["steps"], lam=s["terminal_weight"])
        if self.kind == "maier-stein":
            return make_maier_stein(
                beta=s["beta"], noise=s["eps"], horizon=s["horizon"],
                steps=s["steps"], lam=s["terminal_weight"])
        if self.kind == "lactose":
            kwargs = {k: v for k, v in s.items()
                      if k in LACTOSE_CONSTANTS or k == "feed_lactose"}
            return make_lactose_operon(
                noise=s["eps"], horizon=s["horizon"], steps=s["steps"],
                lam=s["terminal_weight"], **kwargs)
        raise ConfigError(f"system.kind: unknown system {self.kind!r}")

    def replace(self, **changes) -> "ExperimentConfig":
        """Return a copy with hyper/system/run fields overridden.

        Recognizes the flat config key names: agent keys map into hyper,
        system keys into the system dict, seed into hyper.seed, window_lo
        and window_hi into the window tuple.
        """
        system = dict(self.system)
        hyper_changes = {}
        window = list(self.window)
        compare = self.compare_analytic
        for key, value in changes.items():
            if key == "seed":
                hyper_changes["seed"] = int(value)
            elif key in ("episodes",) or key in _AGENT_KEYS:
                hyper_changes[key] = value
            elif key == "window_lo":
                window[0] = int(value)
            elif key == "window_hi":
                window[1] = int(value)
            elif key == "compare_analytic":
                compare = bool(value)
            elif key in _SYSTEM_KEYS[self.kind]:
                system[key] = value
            else:
                raise ConfigError(f"unknown config field {key!r}")
        hyper = dataclasses.replace(self.hyper, **hyper_changes)
        cfg = ExperimentConfig(
            kind=self.kind, system=system, hyper=hyper,
            window=tuple(window), compare_analytic=compare)
        _validate(cfg)
        return cfg

    def to_ini(self) -> str:
        """Serialize back to the config format, fully resolved.

        Deterministic: fixed key order, floats via repr so a reload
        reproduces identical values.
        """
        lines = ["[system]", f"kind = {self.kind}"]
        for key in _SYSTEM_KEYS[self.kind]:
            if key == "kind" or key not in self.system:
                continue
            lines.append(f"{key} = {_fmt(self.system[key])}")
        lines.append("")
        lines.append("[agent]")
        h = self.hyper
        lines.append(f"episodes = {h.episodes}")
        lines.append(f"batch_size = {h.batch_size}")
        lines.append(f"warmup_trajectories = {h.warmup_trajectories}")
        lines.append(f"exploration_std = {_fmt(h.exploration_std)}")
        lines.append(f"actor_lr = {_fmt(h.actor_lr)}")
        lines.append(f"critic_lr = {_fmt(h.critic_lr)}")
        lines.append(f"hidden_width = {h.hidden_width}")
        lines.append(f"action_bound = {_fmt(h.action_bound)}")
        lines.append(f"buffer_capacity = {h.buffer_capacity}")
        lines.append("")
        lines.append("[run]")
        lines.append(f"seed = {h.seed}")
        lines.append(f"window_lo = {self.window[0]}")
        lines.append(f"window_hi = {self.window[1]}")
        lines.append(f"compare_analytic = {'true' if self.compare_analytic else 'false'}")
        lines.append("")
        return "\n".join(lines)


def _fmt(value) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _coerce_float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: expected a number, got {raw!r}") from None


def _coerce_int(section: str, key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: expected an integer, got {raw!r}") from None


def _coerce_bool(section: str, key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{section}.{key}: expected true/false, got {raw!r}")


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return parse_config(parser, origin=str(path))


def parse_config(parser: configparser.ConfigParser,
                 origin: str = "<config>") -> ExperimentConfig:
    for section in parser.sections():
        if section not in ("system", "agent", "run"):
            raise ConfigError(f"{origin}: unknown section [{section}]")
    for required in ("system", "agent", "run"):
        if not parser.has_section(required):
            raise ConfigError(f"{origin}: missing section [{required}]")

    sys_items = dict(parser.items("system"))
    kind = sys_items.pop("kind", None)
    if kind is None:
        raise ConfigError("system.kind is required")
    if kind not in SYSTEM_KINDS:
        raise ConfigError(
            f"system.kind: unknown system {kind!r}; "
            f"expected one of {', '.join(SYSTEM_KINDS)}")

    allowed = _SYSTEM_KEYS[kind]
    for key in sys_items:
        if key not in allowed:
            raise ConfigError(
                f"system.{key}: unknown key for kind {kind!r}")
    for key in ("horizon", "terminal_weight") + _SYSTEM_REQUIRED[kind]:
        if key not in sys_items:
            raise ConfigError(f"system.{key} is required")
    if "steps" not in sys_items:
        raise ConfigError("system.steps is required")

    system = {}
    system["horizon"] = _coerce_float("system", "horizon", sys_items["horizon"])
    system["steps"] = _coerce_int("system", "steps", sys_items["steps"])
    system["terminal_weight"] = _coerce_float(
        "system", "terminal_weight", sys_items["terminal_weight"])
    for key in sys_items:
        if key in ("horizon", "steps", "terminal_weight"):
            continue
        system[key] = _coerce_float("system", key, sys_items[key])

    agent_items = dict(parser.items("agent"))
    for key in agent_items:
        if key not in _AGENT_KEYS:
            raise ConfigError(f"agent.{key}: unknown key")
    for key in ("episodes",):
        if key not in agent_items:
            raise ConfigError(f"agent.{key} is required")

    run_items = dict(parser.items("run"))
    for key in run_items:
        if key not in _RUN_KEYS:
            raise ConfigError(f"run.{key}: unknown key")
    for key in ("seed", "window_lo", "window_hi"):
        if key not in run_items:
            raise ConfigError(f"run.{key} is required")

    hyper_kwargs = {
        "episodes": _coerce_int("agent", "episodes", agent_items["episodes"]),
        "seed": _coerce_int("run", "seed", run_items["seed"]),
    }
    int_keys = ("batch_size", "warmup_trajectories", "hidden_width",
                "buffer_capacity")
    float_keys = ("exploration_std", "actor_lr", "critic_lr", "action_bound")
    for key in int_keys:
        if key in agent_items:
            hyper_kwargs[key] = _coerce_int("agent", key, agent_items[key])
    for key in float_keys:
        if key in agent_items:
            hyper_kwargs[key] = _coerce_float("agent", key, agent_items[key])

    window = (
        _coerce_int("run", "window_lo", run_items["window_lo"]),
        _coerce_int("run", "window_hi", run_items["window_hi"]),
    )
    compare = False
    if "compare_analytic" in run_items:
        compare = _coerce_bool(
            "run", "compare_analytic", run_items["compare_analytic"])

    try:
        hyper = Hyperparams(**hyper_kwargs)
    except ValueError as exc:
        raise ConfigError(f"agent: {exc}") from exc

    cfg = ExperimentConfig(
        kind=kind, system=system, hyper=hyper, window=window,
        compare_analytic=compare)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    s = cfg.system
    if s["horizon"] <= 0.0:
        raise ConfigError("system.horizon must be positive")
    if s["steps"] < 1:
        raise ConfigError("system.steps must be at least 1")
    if s["terminal_weight"] <= 0.0:
        raise ConfigError("system.terminal_weight must be positive")
    if cfg.kind == "maier-stein":
        if s["eps"] <= 0.0:
            raise ConfigError("system.eps must be positive")
        if s["beta"] <= 0.0:
            raise ConfigError("system.beta must be positive")
    if cfg.kind == "lactose":
        if s["eps"] <= 0.0:
            raise ConfigError("system.eps must be positive")
        if "feed_lactose" in s and s["feed_lactose"] <= 0.0:
            raise ConfigError("system.feed_lactose must be positive")
    lo, hi = cfg.window
    if lo < 0:
        raise ConfigError("run.window_lo must be nonnegative")
    if hi < lo:
        raise ConfigError("run.window_hi must be at least window_lo")
    if hi >= cfg.hyper.episodes:
        raise ConfigError(
            f"run.window_hi must be below agent.episodes "
            f"({hi} >= {cfg.hyper.episodes})")
    if cfg.compare_analytic and cfg.kind != "linear":
        raise ConfigError(
            "run.compare_analytic is only available for the linear system")
    try:
        cfg.build_system()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from exc
