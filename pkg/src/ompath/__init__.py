"""Most probable transition pathways of stochastic dynamical systems.

The solver reformulates Onsager-Machlup action minimisation as a
finite-horizon optimal control problem and trains a deterministic policy
for it with terminal-prediction DDPG: an actor-critic scheme whose actor
objective couples the learned value function with a differentiable rollout
of the policy to the horizon.
"""

from .dynsys import (SystemSpec, Transition, PathRecord, make_linear_potential,
                     make_maier_stein, make_lactose_operon)
from .nn import ActorNet, CriticNet, Adam, init_actor, init_critic
from .tpddpg import Hyperparams, EpisodeLog, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "SystemSpec",
    "Transition",
    "PathRecord",
    "make_linear_potential",
    "make_maier_stein",
    "make_lactose_operon",
    "ActorNet",
    "CriticNet",
    "Adam",
    "init_actor",
    "init_critic",
    "Hyperparams",
    "EpisodeLog",
    "TrainResult",
    "train",
]
