"""Actor and critic networks with a hand-rolled Adam optimizer.

Both networks are single-hidden-layer perceptrons.  The actor squashes its
output through tanh and scales it to the action bound,

    a(s) = a_max * tanh(W2 @ relu(W1 @ s + b1) + b2),

and the critic maps a state-action pair through an arctan hidden layer to an
unbounded scalar,

    Q(s, a) = c @ arctan(W1 @ [s; a] + b1) + c0.

Each network exists in two forms that share the same parameter arrays: the
plain numpy forward used by the environment loop, and a tape-bound view
(:class:`TapeActor` / :class:`TapeCritic`) used wherever gradients are
needed.  The two forwards perform the same operations in the same order, so
single-state evaluations agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

__all__ = [
    "DenseLayer",
    "ActorNet",
    "CriticNet",
    "TapeActor",
    "TapeCritic",
    "Adam",
    "DivergenceError",
    "init_actor",
    "init_critic",
]


class DivergenceError(RuntimeError):
    """A training step produced a non-finite gradient and was aborted."""


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray   # (out,)

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.biases.copy())


class ActorNet:
    """Deterministic policy network mapping states to bounded controls."""

    def __init__(self, hidden: DenseLayer, output: DenseLayer, action_scale: float):
        self.hidden = hidden
        self.output = output
        self.action_scale = float(action_scale)

    @property
    def state_dim(self) -> int:
        return self.hidden.weights.shape[1]

    @property
    def control_dim(self) -> int:
        return self.output.weights.shape[0]

    @property
    def width(self) -> int:
        return self.hidden.weights.shape[0]

    def forward(self, s: np.ndarray) -> np.ndarray:
        h = np.maximum(self.hidden.weights @ s + self.hidden.biases, 0.0)
        return np.tanh(self.output.weights @ h + self.output.biases) * self.action_scale

    def forward_batch(self, states: np.ndarray) -> np.ndarray:
        h = np.maximum(states @ self.hidden.weights.T + self.hidden.biases, 0.0)
        return np.tanh(h @ self.output.weights.T + self.output.biases) * self.action_scale

    def parameters(self) -> list[np.ndarray]:
        return [self.hidden.weights, self.hidden.biases,
                self.output.weights, self.output.biases]

    def copy(self) -> "ActorNet":
        return ActorNet(self.hidden.copy(), self.output.copy(), self.action_scale)


class CriticNet:
    """State-action value network with an arctan hidden layer."""

    def __init__(self, hidden: DenseLayer, output: DenseLayer):
        self.hidden = hidden
        self.output = output

    @property
    def input_dim(self) -> int:
        return self.hidden.weights.shape[1]

    @property
    def width(self) -> int:
        return self.hidden.weights.shape[0]

    def forward(self, s: np.ndarray, a: np.ndarray) -> float:
        z = np.concatenate((s, a))
        h = np.arctan(self.hidden.weights @ z + self.hidden.biases)
        return float((self.output.weights @ h + self.output.biases)[0])

    def forward_batch(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        z = np.concatenate((states, actions), axis=1)
        h = np.arctan(z @ self.hidden.weights.T + self.hidden.biases)
        return h @ self.output.weights[0] + self.output.biases[0]

    def parameters(self) -> list[np.ndarray]:
        return [self.hidden.weights, self.hidden.biases,
                self.output.weights, self.output.biases]

    def copy(self) -> "CriticNet":
        return CriticNet(self.hidden.copy(), self.output.copy())


class TapeActor:
    """Actor parameters lifted onto a tape, with differentiable forwards."""

    def __init__(self, tape: ad.Tape, net: ActorNet):
        self.w1 = tape.var(net.hidden.weights)
        self.b1 = tape.var(net.hidden.biases)
        self.w2 = tape.var(net.output.weights)
        self.b2 = tape.var(net.output.biases)
        self.action_scale = net.action_scale

    def forward(self, s: ad.Var) -> ad.Var:
        h = ad.relu(ad.add(ad.matvec(self.w1, s), self.b1))
        return ad.scale(ad.tanh(ad.add(ad.matvec(self.w2, h), self.b2)),
                        self.action_scale)

    def forward_batch(self, states: ad.Var) -> ad.Var:
        h = ad.relu(ad.add(ad.matmul_t(states, self.w1), self.b1))
        return ad.scale(ad.tanh(ad.add(ad.matmul_t(h, self.w2), self.b2)),
                        self.action_scale)

    def gradients(self) -> list[np.ndarray]:
        return [self.w1.grad, self.b1.grad, self.w2.grad, self.b2.grad]


class TapeCritic:
    """Critic parameters lifted onto a tape, with differentiable forwards."""

    def __init__(self, tape: ad.Tape, net: CriticNet):
        self.w1 = tape.var(net.hidden.weights)
        self.b1 = tape.var(net.hidden.biases)
        self.w2 = tape.var(net.output.weights)
        self.b2 = tape.var(net.output.biases)

    def forward(self, s: ad.Var, a: ad.Var) -> ad.Var:
        z = ad.concat(s, a)
        h = ad.arctan(ad.add(ad.matvec(self.w1, z), self.b1))
        return ad.component(ad.add(ad.matvec(self.w2, h), self.b2), 0)

    def forward_batch(self, states: ad.Var, actions: ad.Var) -> ad.Var:
        z = ad.concat(states, actions)
        h = ad.arctan(ad.add(ad.matmul_t(z, self.w1), self.b1))
        q = ad.matvec(h, ad.row(self.w2, 0))
        return ad.add(q, ad.component(self.b2, 0))

    def gradients(self) -> list[np.ndarray]:
        return [self.w1.grad, self.b1.grad, self.w2.grad, self.b2.grad]


def _uniform_layer(rng: np.random.Generator, out_dim: int, in_dim: int) -> DenseLayer:
    bound = 1.0 / np.sqrt(in_dim)
    w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    return DenseLayer(w, np.zeros(out_dim))


def init_actor(state_dim: int, control_dim: int, width: int,
               action_scale: float, seed) -> ActorNet:
    """Seed-deterministic actor init: uniform +-1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    hidden = _uniform_layer(rng, width, state_dim)
    output = _uniform_layer(rng, control_dim, width)
    return ActorNet(hidden, output, action_scale)


def init_critic(state_dim: int, control_dim: int, width: int, seed) -> CriticNet:
    """Seed-deterministic critic init over the concatenated (state, action)."""
    rng = np.random.default_rng(seed)
    hidden = _uniform_layer(rng, width, state_dim + control_dim)
    output = _uniform_layer(rng, 1, width)
    return CriticNet(hidden, output)


class Adam:
    """Adam with bias correction, updating the given arrays in place."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError(
                f"expected {len(self.params)} gradients, got {len(grads)}"
            )
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise DivergenceError("non-finite gradient, step aborted")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
