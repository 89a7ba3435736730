"""Experiment shell: config files, checkpoints, CSV/SVG artifacts, CLI."""

from .config import ConfigError, ExperimentConfig, load_config
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .runner import RunArtifacts, run_experiment, terminal_loss_sweep

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
    "RunArtifacts",
    "run_experiment",
    "terminal_loss_sweep",
]
