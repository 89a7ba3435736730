"""Plain-text network checkpoints.

Layout: a version line, one dims line per network, then one line per
parameter array in fixed order (actor hidden weights, hidden biases, output
weights, output biases, action scale; critic in the same order, minus the
scale).  Values are decimal reprs of 64-bit floats, which round-trip
bit-exactly, so a reloaded network computes identical forwards.
"""

import os

import numpy as np

from ..nn import ActorNet, CriticNet, DenseLayer

_MAGIC = "ompath checkpoint v1"

_ACTOR_FIELDS = (
    "actor.hidden.weights",
    "actor.hidden.biases",
    "actor.output.weights",
    "actor.output.biases",
    "actor.action_scale",
)
_CRITIC_FIELDS = (
    "critic.hidden.weights",
    "critic.hidden.biases",
    "critic.output.weights",
    "critic.output.biases",
)


class CheckpointError(ValueError):
    """Raised for unreadable, truncated, or dimensionally wrong checkpoints."""


def _fmt_array(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).ravel())


def save_checkpoint(actor: ActorNet, critic: CriticNet, path) -> None:
    """Write both networks to a text file; see module docstring for layout."""
    if critic.input_dim != actor.state_dim + actor.control_dim:
        raise CheckpointError(
            f"inconsistent pair: critic input dim {critic.input_dim} != "
            f"actor state+control {actor.state_dim + actor.control_dim}")
    lines = [_MAGIC]
    lines.append(f"actor {actor.state_dim} {actor.control_dim} {actor.width}")
    lines.append(f"critic {actor.state_dim} {actor.control_dim} {critic.width}")
    arrays = [actor.hidden.weights, actor.hidden.biases,
              actor.output.weights, actor.output.biases,
              np.array([actor.action_scale])]
    for name, arr in zip(_ACTOR_FIELDS, arrays):
        lines.append(f"{name} {_fmt_array(arr)}")
    arrays = [critic.hidden.weights, critic.hidden.biases,
              critic.output.weights, critic.output.biases]
    for name, arr in zip(_CRITIC_FIELDS, arrays):
        lines.append(f"{name} {_fmt_array(arr)}")
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _parse_dims(line: str, expected_tag: str, path) -> tuple[int, int, int]:
    parts = line.split()
    if len(parts) != 4 or parts[0] != expected_tag:
        raise CheckpointError(
            f"{path}: expected '{expected_tag} <state> <control> <width>', "
            f"found {line!r}")
    try:
        dims = tuple(int(p) for p in parts[1:])
    except ValueError:
        raise CheckpointError(
            f"{path}: non-integer dims in {line!r}") from None
    if any(d < 1 for d in dims):
        raise CheckpointError(f"{path}: dims must be positive in {line!r}")
    return dims


def _parse_array(line: str, name: str, shape: tuple, path) -> np.ndarray:
    parts = line.split()
    if not parts or parts[0] != name:
        found = parts[0] if parts else "<empty line>"
        raise CheckpointError(
            f"{path}: expected field {name!r}, found {found!r}")
    expected = int(np.prod(shape))
    values = parts[1:]
    if len(values) != expected:
        raise CheckpointError(
            f"{path}: field {name!r} expected {expected} values "
            f"(shape {shape}), found {len(values)}")
    try:
        arr = np.array([float(v) for v in values], dtype=np.float64)
    except ValueError:
        raise CheckpointError(
            f"{path}: field {name!r} contains a non-numeric value") from None
    return arr.reshape(shape)


def load_checkpoint(path) -> tuple[ActorNet, CriticNet]:
    """Rebuild the saved networks; forwards match the saved ones bit-exactly."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not lines or lines[0].strip() != _MAGIC:
        head = lines[0] if lines else "<empty file>"
        raise CheckpointError(
            f"{path}: not a checkpoint (expected {_MAGIC!r}, found {head!r})")
    body = lines[1:]
    if len(body) < 2 + len(_ACTOR_FIELDS) + len(_CRITIC_FIELDS):
        raise CheckpointError(
            f"{path}: truncated checkpoint "
            f"({len(lines)} lines, expected "
            f"{3 + len(_ACTOR_FIELDS) + len(_CRITIC_FIELDS)})")

    state_dim, control_dim, actor_width = _parse_dims(body[0], "actor", path)
    c_state, c_control, critic_width = _parse_dims(body[1], "critic", path)
    if (c_state, c_control) != (state_dim, control_dim):
        raise CheckpointError(
            f"{path}: critic dims ({c_state}, {c_control}) do not match "
            f"actor dims ({state_dim}, {control_dim})")

    rows = iter(body[2:])
    shapes = [
        (actor_width, state_dim),
        (actor_width,),
        (control_dim, actor_width),
        (control_dim,),
        (1,),
    ]
    actor_arrays = [
        _parse_array(next(rows), name, shape, path)
        for name, shape in zip(_ACTOR_FIELDS, shapes)
    ]
    critic_in = state_dim + control_dim
    shapes = [
        (critic_width, critic_in),
        (critic_width,),
        (1, critic_width),
        (1,),
    ]
    critic_arrays = [
        _parse_array(next(rows), name, shape, path)
        for name, shape in zip(_CRITIC_FIELDS, shapes)
    ]

    actor = ActorNet(
        DenseLayer(actor_arrays[0], actor_arrays[1]),
        DenseLayer(actor_arrays[2], actor_arrays[3]),
        float(actor_arrays[4][0]),
    )
    critic = CriticNet(
        DenseLayer(critic_arrays[0], critic_arrays[1]),
        DenseLayer(critic_arrays[2], critic_arrays[3]),
    )
    return actor, critic
