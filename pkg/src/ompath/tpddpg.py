"""Terminal-prediction DDPG for finite-horizon transition path problems.

The agent is a deterministic actor-critic pair without target networks.
Time is part of the problem: replay memory is kept per timestep, the critic
bootstraps with Q(s_N, .) = 0 at the horizon, and the actor loss at
timestep k adds to the critic value a terminal-prediction term

    L_pred = lam * | s_hat_N - x_target |_2,

where s_hat_N is the noise-free rollout of the current policy from s_k to
the horizon, differentiated through the environment dynamics.  Their sum
estimates the total cost-to-go from s_k, so descending it trains the policy
directly against the path functional.

Per episode and timestep t: act with exploration noise, store the
transition, sample a minibatch from the t-slice of memory, take one critic
TD step (targets held constant), then one actor step with the critic
frozen.  Minibatch rollouts are batched on one tape, which keeps the
per-episode cost at O(N^2) small-matrix operations.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .dynsys import (BlowupError, PathRecord, SystemSpec, Transition, running_cost,
                     step, step_node, terminal_cost, terminal_cost_node)
from .nn import (ActorNet, Adam, CriticNet, DivergenceError, TapeActor, TapeCritic,
                 init_actor, init_critic)

__all__ = [
    "Hyperparams",
    "EpisodeLog",
    "MeanPath",
    "TrainResult",
    "ReplayBuffer",
    "TerminalPrediction",
    "ActorUpdateResult",
    "select_action",
    "warmup_collect",
    "terminal_predict",
    "critic_update",
    "critic_td_gradients",
    "actor_update",
    "actor_loss_gradients",
    "train_episode",
    "train",
    "BLOWUP_PENALTY",
]

log = logging.getLogger(__name__)

# Added to L_pred when a differentiable rollout leaves the finite range;
# large enough to dominate any real path cost so divergence is unmissable
# in the logs.
BLOWUP_PENALTY = 1e6

# How many leading timesteps contribute to the per-episode early terminal
# loss average used by step-count sweeps.
EARLY_WINDOW = 11


@dataclass
class Hyperparams:
    """Agent settings; system geometry lives in SystemSpec."""

    episodes: int
    batch_size: int = 64
    warmup_trajectories: int = 64
    exploration_std: float = 0.5
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    hidden_width: int = 15
    action_bound: float = 5.0
    buffer_capacity: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.warmup_trajectories < 1:
            raise ValueError("warmup_trajectories must be at least 1")
        if self.exploration_std < 0:
            raise ValueError("exploration_std must be non-negative")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be at least 1")
        if self.action_bound <= 0:
            raise ValueError("action_bound must be positive")
        if self.buffer_capacity < self.batch_size:
            raise ValueError("buffer_capacity must cover one batch")


@dataclass
class EpisodeLog:
    """Per-episode diagnostics; terminal_loss is L_pred at timestep 0."""

    episode: int
    running_cost_sum: float
    critic_loss: float
    terminal_loss: float
    total_cost: float
    path: PathRecord
    early_terminal_losses: tuple[float, ...] = ()
    diverged: bool = False


@dataclass
class MeanPath:
    """Pointwise average of realized paths over an episode window."""

    times: np.ndarray
    states: np.ndarray


@dataclass
class TrainResult:
    actor: ActorNet
    critic: CriticNet
    episodes: list[EpisodeLog]
    mean_path: MeanPath
    diverged_episodes: int = 0

    @property
    def failed(self) -> bool:
        return self.diverged_episodes * 2 > len(self.episodes)


class ReplayBuffer:
    """Replay memory sliced by timestep, FIFO-bounded per slice."""

    def __init__(self, n_steps: int, capacity: int = 10_000):
        self.n_steps = n_steps
        self.capacity = capacity
        self._slices: list[deque[Transition]] = [
            deque(maxlen=capacity) for _ in range(n_steps)
        ]

    def store(self, tr: Transition) -> None:
        self._slices[tr.t_index].append(tr)

    def size(self, t_index: int) -> int:
        return len(self._slices[t_index])

    def sample(self, t_index: int, m: int, rng: np.random.Generator
               ) -> list[Transition]:
        store = self._slices[t_index]
        if not store:
            raise ValueError(f"no transitions stored for timestep {t_index}")
        idx = rng.integers(0, len(store), size=m)
        return [store[i] for i in idx]


@dataclass
class TerminalPrediction:
    """Result of rolling the noise-free policy from s_k to the horizon."""

    terminal_state: np.ndarray
    loss: float
    loss_node: ad.Var | None
    diverged: bool = False


@dataclass
class ActorUpdateResult:
    loss: float
    terminal_loss: float
    diverged: bool = False


def select_action(actor: ActorNet, s: np.ndarray, exploration_std: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Policy output plus componentwise Gaussian noise (not re-clamped)."""
    noise = rng.normal(0.0, exploration_std, size=actor.control_dim)
    return actor.forward(s) + noise


def warmup_collect(spec: SystemSpec, actor: ActorNet, hyper: Hyperparams,
                   rng: np.random.Generator) -> ReplayBuffer:
    """Fill replay memory with full exploratory trajectories from x_start."""
    buffer = ReplayBuffer(spec.steps, hyper.buffer_capacity)
    collected = 0
    attempts = 0
    max_attempts = 10 * hyper.warmup_trajectories
    while collected < hyper.warmup_trajectories:
        if attempts >= max_attempts:
            raise RuntimeError(
                f"warmup abandoned after {attempts} attempts: "
                f"trajectories keep blowing up"
            )
        attempts += 1
        transitions = []
        s = spec.x_start.copy()
        try:
            for t in range(spec.steps):
                a = select_action(actor, s, hyper.exploration_std, rng)
                s_next = step(spec, s, a)
                transitions.append(
                    Transition(s, a, running_cost(spec, s, a), s_next, t)
                )
                s = s_next
        except BlowupError:
            log.warning("warmup trajectory %d blew up, discarding", attempts)
            continue
        for tr in transitions:
            buffer.store(tr)
        collected += 1
    return buffer


def terminal_predict(spec: SystemSpec, actor: ActorNet, s_k: np.ndarray, k: int,
                     tape: ad.Tape | None = None,
                     actor_vars: TapeActor | None = None) -> TerminalPrediction:
    """Roll the noise-free policy from s_k at timestep k to the horizon.

    Returns the predicted endpoint and the terminal loss
    lam * |s_hat_N - x_target|, recorded on a tape so it differentiates
    through both the policy and the dynamics.  Passing an existing tape and
    lifted actor lets callers backpropagate into shared parameter nodes.

    The composed prediction is exactly the deterministic environment
    rollout with the same policy: both use the same elementary operations.
    """
    if not 0 <= k <= spec.steps:
        raise ValueError(f"timestep {k} outside [0, {spec.steps}]")
    if tape is None:
        tape = ad.Tape()
    if actor_vars is None:
        actor_vars = TapeActor(tape, actor)
    x = tape.var(np.asarray(s_k, dtype=np.float64))
    diverged = False
    for _ in range(k, spec.steps):
        u = actor_vars.forward(x)
        try:
            x = step_node(spec, x, u)
        except BlowupError:
            diverged = True
            log.warning("terminal prediction blew up from timestep %d", k)
            break
    loss_node = terminal_cost_node(spec, x)
    if diverged:
        loss_node = ad.add_const(loss_node, BLOWUP_PENALTY)
    return TerminalPrediction(x.value.copy(), float(loss_node.value),
                              loss_node, diverged)


def _batch_arrays(batch: list[Transition]):
    states = np.stack([tr.s for tr in batch])
    actions = np.stack([tr.a for tr in batch])
    rewards = np.array([tr.r for tr in batch])
    next_states = np.stack([tr.s_next for tr in batch])
    return states, actions, rewards, next_states


def _batch_t_index(batch: list[Transition]) -> int:
    t = batch[0].t_index
    if any(tr.t_index != t for tr in batch):
        raise ValueError("minibatch mixes timestep indices")
    return t


def critic_td_gradients(spec: SystemSpec, critic: CriticNet, actor: ActorNet,
                        batch: list[Transition]):
    """TD loss and its critic gradients for one same-timestep minibatch.

    Targets y = r + Q(s', A(s')) are computed outside the tape, so no
    gradient flows through the bootstrap term; at the last timestep the
    boundary condition Q(s_N, .) = 0 makes y = r.
    """
    t_index = _batch_t_index(batch)
    states, actions, rewards, next_states = _batch_arrays(batch)
    if t_index == spec.steps - 1:
        targets = rewards
    else:
        next_actions = actor.forward_batch(next_states)
        targets = rewards + critic.forward_batch(next_states, next_actions)

    tape = ad.Tape()
    critic_vars = TapeCritic(tape, critic)
    q = critic_vars.forward_batch(tape.const(states), tape.const(actions))
    loss = ad.mean(ad.square(ad.sub(q, tape.const(targets))))
    tape.backward(loss)
    return float(loss.value), critic_vars.gradients()


def critic_update(spec: SystemSpec, critic: CriticNet, actor: ActorNet,
                  batch: list[Transition], adam: Adam) -> float:
    """One TD step on the critic; returns the pre-step loss."""
    loss, grads = critic_td_gradients(spec, critic, actor, batch)
    adam.step(grads)
    return loss


def actor_loss_gradients(spec: SystemSpec, actor: ActorNet, critic: CriticNet,
                         batch: list[Transition]):
    """Actor loss mean_i[ Q(s_i, A(s_i)) + L_pred(s_i) ] and its gradients.

    The whole minibatch is rolled to the horizon on one tape; the policy
    action feeding the critic is reused as the first rollout action, so
    gradients flow through both terms of the shared forward.  The critic
    participates as a frozen function: its parameter adjoints are computed
    but never applied.

    Returns (loss, mean terminal loss, actor gradients, diverged flag).
    """
    t_index = _batch_t_index(batch)
    states, _, _, _ = _batch_arrays(batch)

    tape = ad.Tape()
    actor_vars = TapeActor(tape, actor)
    critic_vars = TapeCritic(tape, critic)
    s0 = tape.const(states)
    first_actions = actor_vars.forward_batch(s0)
    q = critic_vars.forward_batch(s0, first_actions)

    x = s0
    u = first_actions
    diverged = False
    for t in range(t_index, spec.steps):
        if t > t_index:
            u = actor_vars.forward_batch(x)
        try:
            x = step_node(spec, x, u)
        except BlowupError:
            diverged = True
            log.warning("minibatch rollout blew up at timestep %d", t)
            break
    target = tape.const(np.broadcast_to(spec.x_target, x.value.shape))
    pred = ad.scale(ad.rownorm(ad.sub(x, target)), spec.lam)
    if diverged:
        pred = ad.add_const(pred, BLOWUP_PENALTY)
    loss = ad.mean(ad.add(q, pred))
    tape.backward(loss)
    return (float(loss.value), float(pred.value.mean()),
            actor_vars.gradients(), diverged)


def actor_update(spec: SystemSpec, actor: ActorNet, critic: CriticNet,
                 batch: list[Transition], adam: Adam) -> ActorUpdateResult:
    """One descent step on the actor objective; critic stays untouched."""
    loss, pred_mean, grads, diverged = actor_loss_gradients(
        spec, actor, critic, batch)
    adam.step(grads)
    return ActorUpdateResult(loss, pred_mean, diverged)


def train_episode(spec: SystemSpec, actor: ActorNet, critic: CriticNet,
                  buffer: ReplayBuffer, hyper: Hyperparams,
                  rng: np.random.Generator, episode_idx: int,
                  actor_adam: Adam, critic_adam: Adam) -> EpisodeLog:
    """One noisy episode interleaved with per-timestep critic/actor updates."""
    n = spec.steps
    states = np.full((n + 1, spec.state_dim), np.nan)
    actions = np.full((n, spec.control_dim), np.nan)
    states[0] = spec.x_start
    s = spec.x_start.copy()
    run_sum = 0.0
    critic_losses: list[float] = []
    early_terminal = [np.nan] * min(EARLY_WINDOW, n)
    diverged = False
    truncated = False

    for t in range(n):
        a = select_action(actor, s, hyper.exploration_std, rng)
        try:
            s_next = step(spec, s, a)
        except BlowupError:
            log.warning("episode %d blew up at timestep %d", episode_idx, t)
            diverged = True
            truncated = True
            break
        r = running_cost(spec, s, a)
        buffer.store(Transition(s, a, r, s_next, t))
        run_sum += r
        actions[t] = a
        states[t + 1] = s_next

        batch = buffer.sample(t, hyper.batch_size, rng)
        try:
            critic_losses.append(critic_update(spec, critic, actor, batch,
                                               critic_adam))
            result = actor_update(spec, actor, critic, batch, actor_adam)
        except DivergenceError:
            log.warning("episode %d: non-finite gradient at timestep %d, "
                        "updates skipped", episode_idx, t)
            diverged = True
            s = s_next
            continue
        if result.diverged:
            diverged = True
        if t < len(early_terminal):
            early_terminal[t] = result.terminal_loss
        s = s_next

    if truncated:
        terminal = float("nan")
        total = float("nan")
    else:
        terminal = early_terminal[0] if early_terminal else float("nan")
        total = run_sum + terminal_cost(spec, states[n])
    return EpisodeLog(
        episode=episode_idx,
        running_cost_sum=run_sum,
        critic_loss=float(np.mean(critic_losses)) if critic_losses else float("nan"),
        terminal_loss=terminal,
        total_cost=total,
        path=PathRecord(states, actions),
        early_terminal_losses=tuple(early_terminal),
        diverged=diverged,
    )


def train(spec: SystemSpec, hyper: Hyperparams,
          avg_window: tuple[int, int] | None = None) -> TrainResult:
    """Full training run; averages realized paths over avg_window episodes.

    The window is inclusive on both ends.  When omitted it defaults to the
    second half of the run.
    """
    if avg_window is None:
        avg_window = (hyper.episodes // 2, hyper.episodes - 1)
    lo, hi = avg_window
    if not 0 <= lo <= hi < hyper.episodes:
        raise ValueError(
            f"averaging window [{lo}, {hi}] outside episodes [0, {hyper.episodes})"
        )

    actor_seed, critic_seed, stream_seed = np.random.SeedSequence(
        hyper.seed).spawn(3)
    actor = init_actor(spec.state_dim, spec.control_dim, hyper.hidden_width,
                       hyper.action_bound, actor_seed)
    critic = init_critic(spec.state_dim, spec.control_dim, hyper.hidden_width,
                         critic_seed)
    rng = np.random.default_rng(stream_seed)
    actor_adam = Adam(actor.parameters(), hyper.actor_lr)
    critic_adam = Adam(critic.parameters(), hyper.critic_lr)
    buffer = warmup_collect(spec, actor, hyper, rng)

    logs: list[EpisodeLog] = []
    for e in range(hyper.episodes):
        logs.append(train_episode(spec, actor, critic, buffer, hyper, rng, e,
                                  actor_adam, critic_adam))
        if (e + 1) % 50 == 0 or e + 1 == hyper.episodes:
            log.info("episode %d/%d: terminal loss %.4g, running cost %.4g",
                     e + 1, hyper.episodes, logs[-1].terminal_loss,
                     logs[-1].running_cost_sum)

    window_paths = [lg.path.states for lg in logs[lo:hi + 1] if not lg.diverged]
    if not window_paths:
        raise RuntimeError("no usable episodes in the averaging window")
    times = np.arange(spec.steps + 1) * spec.dt
    mean_states = np.mean(np.stack(window_paths), axis=0)
    diverged = sum(lg.diverged for lg in logs)
    if diverged:
        log.warning("%d of %d episodes diverged", diverged, len(logs))
    return TrainResult(actor, critic, logs, MeanPath(times, mean_states),
                       diverged)
