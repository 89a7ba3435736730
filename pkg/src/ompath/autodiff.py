"""Reverse-mode automatic differentiation on dense float64 arrays.

A :class:`Tape` records every operation in creation order, which is already
a topological order, so :meth:`Tape.backward` is a single reverse sweep that
accumulates adjoints into the operands.  Values are plain numpy arrays
(0-d scalars, 1-d vectors or 2-d matrices) and each recorded node keeps a
closure holding exactly the arrays its vector-Jacobian product needs.

The op inventory is deliberately small: what the actor/critic networks and
the differentiable policy rollout require, nothing more.  Every op here is
covered by the finite-difference property tests.

Tapes are cheap throwaway objects: one per training step, never shared
between threads.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tape",
    "Var",
    "ShapeMismatch",
    "add",
    "sub",
    "mul",
    "div",
    "matvec",
    "matmul",
    "matmul_t",
    "dot",
    "concat",
    "neg",
    "scale",
    "add_const",
    "tanh",
    "relu",
    "arctan",
    "square",
    "sqrt",
    "l2norm",
    "rownorm",
    "mean",
    "component",
    "row",
    "combine",
    "record_binary",
    "record_unary",
]


class ShapeMismatch(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class Var:
    """One value on a tape plus the adjoint accumulated by backward()."""

    __slots__ = ("tape", "index", "value", "_adjoint", "_backprop")

    def __init__(self, tape, index, value, backprop):
        self.tape = tape
        self.index = index
        self.value = value
        self._adjoint = None
        self._backprop = backprop

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        """Adjoint of this variable; zeros when backward() never reached it."""
        if self._adjoint is None:
            return np.zeros_like(self.value)
        return self._adjoint

    def __repr__(self):
        return f"Var(shape={self.value.shape}, index={self.index})"


class Tape:
    """Append-only record of operations, in topological order."""

    __slots__ = ("nodes", "_ran")

    def __init__(self):
        self.nodes: list[Var] = []
        self._ran = False

    def var(self, value) -> Var:
        """Record a leaf (input or parameter). Gradients accumulate into it."""
        arr = np.asarray(value, dtype=np.float64)
        return self._append(arr, None)

    # A constant is just a leaf whose adjoint nobody reads.
    const = var

    def _append(self, value, backprop) -> Var:
        v = Var(self, len(self.nodes), value, backprop)
        self.nodes.append(v)
        return v

    def backward(self, loss: Var) -> None:
        """Accumulate d(loss)/d(node) into every node reachable from loss.

        The loss must be a scalar (0-d or single-element array).  Calling
        backward a second time on the same tape resets all adjoints first,
        so gradients are never double counted.
        """
        if loss.tape is not self:
            raise ValueError("loss was recorded on a different tape")
        if loss.value.size != 1:
            raise ValueError(
                f"backward needs a scalar loss, got shape {loss.value.shape}"
            )
        if self._ran:
            for v in self.nodes:
                v._adjoint = None
        self._ran = True
        loss._adjoint = np.ones_like(loss.value)
        for v in reversed(self.nodes):
            if v._backprop is not None and v._adjoint is not None:
                v._backprop(v._adjoint)


def _acc(v: Var, g) -> None:
    # First touch copies so later += never mutates a buffer someone else owns.
    if v._adjoint is None:
        v._adjoint = np.array(g, dtype=np.float64)
    else:
        v._adjoint += g


def _check_same_tape(a: Var, b: Var, op: str) -> Tape:
    if a.tape is not b.tape:
        raise ValueError(f"{op}: operands live on different tapes")
    return a.tape


# ---------------------------------------------------------------------------
# binary ops
# ---------------------------------------------------------------------------


def add(a: Var, b: Var) -> Var:
    """Elementwise sum. Also broadcasts a scalar or a row vector over a matrix."""
    t = _check_same_tape(a, b, "add")
    va, vb = a.value, b.value
    if va.shape == vb.shape:
        def back(g):
            _acc(a, g)
            _acc(b, g)
    elif vb.ndim == 0:
        def back(g):
            _acc(a, g)
            _acc(b, g.sum())
    elif va.ndim == 2 and vb.ndim == 1 and va.shape[1] == vb.shape[0]:
        def back(g):
            _acc(a, g)
            _acc(b, g.sum(axis=0))
    else:
        raise ShapeMismatch(f"add: {va.shape} vs {vb.shape}")
    return t._append(va + vb, back)


def sub(a: Var, b: Var) -> Var:
    t = _check_same_tape(a, b, "sub")
    va, vb = a.value, b.value
    if va.shape == vb.shape:
        def back(g):
            _acc(a, g)
            _acc(b, -g)
    elif vb.ndim == 0:
        def back(g):
            _acc(a, g)
            _acc(b, -g.sum())
    elif va.ndim == 2 and vb.ndim == 1 and va.shape[1] == vb.shape[0]:
        def back(g):
            _acc(a, g)
            _acc(b, -g.sum(axis=0))
    else:
        raise ShapeMismatch(f"sub: {va.shape} vs {vb.shape}")
    return t._append(va - vb, back)


def mul(a: Var, b: Var) -> Var:
    """Elementwise product of same-shape operands."""
    t = _check_same_tape(a, b, "mul")
    va, vb = a.value, b.value
    if va.shape != vb.shape:
        raise ShapeMismatch(f"mul: {va.shape} vs {vb.shape}")

    def back(g):
        _acc(a, g * vb)
        _acc(b, g * va)

    return t._append(va * vb, back)


def div(a: Var, b: Var) -> Var:
    """Elementwise quotient of same-shape operands."""
    t = _check_same_tape(a, b, "div")
    va, vb = a.value, b.value
    if va.shape != vb.shape:
        raise ShapeMismatch(f"div: {va.shape} vs {vb.shape}")
    out = va / vb

    def back(g):
        _acc(a, g / vb)
        _acc(b, -g * out / vb)

    return t._append(out, back)


def matvec(m: Var, v: Var) -> Var:
    """Matrix (r, c) times vector (c,) -> (r,)."""
    t = _check_same_tape(m, v, "matvec")
    vm, vv = m.value, v.value
    if vm.ndim != 2 or vv.ndim != 1 or vm.shape[1] != vv.shape[0]:
        raise ShapeMismatch(f"matvec: {vm.shape} vs {vv.shape}")

    def back(g):
        _acc(m, np.outer(g, vv))
        _acc(v, vm.T @ g)

    return t._append(vm @ vv, back)


def matmul(a: Var, b: Var) -> Var:
    """Matrix product (m, n) @ (n, p) -> (m, p)."""
    t = _check_same_tape(a, b, "matmul")
    va, vb = a.value, b.value
    if va.ndim != 2 or vb.ndim != 2 or va.shape[1] != vb.shape[0]:
        raise ShapeMismatch(f"matmul: {va.shape} vs {vb.shape}")

    def back(g):
        _acc(a, g @ vb.T)
        _acc(b, va.T @ g)

    return t._append(va @ vb, back)


def matmul_t(a: Var, b: Var) -> Var:
    """Product with the second operand transposed: (m, n) @ (p, n)^T -> (m, p).

    This is the batched dense-layer primitive, so weight matrices stored as
    (out, in) never need an explicit transpose node.
    """
    t = _check_same_tape(a, b, "matmul_t")
    va, vb = a.value, b.value
    if va.ndim != 2 or vb.ndim != 2 or va.shape[1] != vb.shape[1]:
        raise ShapeMismatch(f"matmul_t: {va.shape} vs {vb.shape}")

    def back(g):
        _acc(a, g @ vb)
        _acc(b, g.T @ va)

    return t._append(va @ vb.T, back)


def dot(a: Var, b: Var) -> Var:
    """Inner product of two vectors -> 0-d scalar."""
    t = _check_same_tape(a, b, "dot")
    va, vb = a.value, b.value
    if va.ndim != 1 or va.shape != vb.shape:
        raise ShapeMismatch(f"dot: {va.shape} vs {vb.shape}")

    def back(g):
        _acc(a, g * vb)
        _acc(b, g * va)

    return t._append(np.asarray(va @ vb), back)


def concat(a: Var, b: Var) -> Var:
    """Concatenate two vectors, or two matrices along their columns."""
    t = _check_same_tape(a, b, "concat")
    va, vb = a.value, b.value
    if va.ndim == 1 and vb.ndim == 1:
        na = va.shape[0]

        def back(g):
            _acc(a, g[:na])
            _acc(b, g[na:])

        return t._append(np.concatenate((va, vb)), back)
    if va.ndim == 2 and vb.ndim == 2 and va.shape[0] == vb.shape[0]:
        ca = va.shape[1]

        def back(g):
            _acc(a, g[:, :ca])
            _acc(b, g[:, ca:])

        return t._append(np.concatenate((va, vb), axis=1), back)
    raise ShapeMismatch(f"concat: {va.shape} vs {vb.shape}")


# ---------------------------------------------------------------------------
# unary ops
# ---------------------------------------------------------------------------


def neg(a: Var) -> Var:
    def back(g):
        _acc(a, -g)

    return a.tape._append(-a.value, back)


def scale(a: Var, c: float) -> Var:
    """Multiply by a Python constant."""
    c = float(c)

    def back(g):
        _acc(a, g * c)

    return a.tape._append(a.value * c, back)


def add_const(a: Var, c: float) -> Var:
    """Shift by a Python constant."""
    def back(g):
        _acc(a, g)

    return a.tape._append(a.value + float(c), back)


def tanh(a: Var) -> Var:
    out = np.tanh(a.value)

    def back(g):
        _acc(a, g * (1.0 - out * out))

    return a.tape._append(out, back)


def relu(a: Var) -> Var:
    """max(x, 0); the derivative at exactly 0 is taken to be 0."""
    va = a.value

    def back(g):
        _acc(a, g * (va > 0.0))

    return a.tape._append(np.maximum(va, 0.0), back)


def arctan(a: Var) -> Var:
    va = a.value

    def back(g):
        _acc(a, g / (1.0 + va * va))

    return a.tape._append(np.arctan(va), back)


def square(a: Var) -> Var:
    va = a.value

    def back(g):
        _acc(a, g * (2.0 * va))

    return a.tape._append(va * va, back)


def sqrt(a: Var) -> Var:
    """Elementwise square root; the caller keeps inputs strictly positive."""
    out = np.sqrt(a.value)

    def back(g):
        _acc(a, g * (0.5 / out))

    return a.tape._append(out, back)


def l2norm(a: Var) -> Var:
    """Euclidean norm of a vector -> 0-d scalar, with zero subgradient at 0."""
    va = a.value
    if va.ndim != 1:
        raise ShapeMismatch(f"l2norm: expected a vector, got {va.shape}")
    out = np.sqrt(np.asarray(va @ va))

    def back(g):
        if out > 0.0:
            _acc(a, g * (va / out))
        else:
            _acc(a, np.zeros_like(va))

    return a.tape._append(out, back)


def rownorm(a: Var) -> Var:
    """Row-wise Euclidean norms of a matrix -> vector, zero subgradient at 0."""
    va = a.value
    if va.ndim != 2:
        raise ShapeMismatch(f"rownorm: expected a matrix, got {va.shape}")
    out = np.sqrt(np.einsum("ij,ij->i", va, va))

    def back(g):
        coef = np.where(out > 0.0, g / np.where(out > 0.0, out, 1.0), 0.0)
        _acc(a, coef[:, None] * va)

    return a.tape._append(out, back)


def mean(a: Var) -> Var:
    """Mean over all elements -> 0-d scalar."""
    va = a.value
    n = va.size

    def back(g):
        _acc(a, np.broadcast_to(g / n, va.shape))

    return a.tape._append(np.asarray(va.mean()), back)


def component(a: Var, j: int) -> Var:
    """Element j of a vector, or column j of a matrix."""
    va = a.value
    if va.ndim == 1:
        def back(g):
            z = np.zeros_like(va)
            z[j] = g
            _acc(a, z)

        return a.tape._append(np.asarray(va[j]), back)
    if va.ndim == 2:
        def back(g):
            z = np.zeros_like(va)
            z[:, j] = g
            _acc(a, z)

        return a.tape._append(va[:, j].copy(), back)
    raise ShapeMismatch(f"component: expected vector or matrix, got {va.shape}")


def row(a: Var, i: int) -> Var:
    """Row i of a matrix as a vector."""
    va = a.value
    if va.ndim != 2:
        raise ShapeMismatch(f"row: expected a matrix, got {va.shape}")

    def back(g):
        z = np.zeros_like(va)
        z[i] = g
        _acc(a, z)

    return a.tape._append(va[i].copy(), back)


def combine(parts: list[Var]) -> Var:
    """Stack scalars into a vector, or vectors into the columns of a matrix.

    Inverse of component(): combine([component(x, j) for j]) rebuilds x.
    """
    if not parts:
        raise ValueError("combine: empty part list")
    t = parts[0].tape
    nd = parts[0].value.ndim
    if nd == 0:
        out = np.array([p.value for p in parts])
    elif nd == 1:
        out = np.stack([p.value for p in parts], axis=1)
    else:
        raise ShapeMismatch(f"combine: parts must be scalars or vectors, got ndim {nd}")

    def back(g):
        for i, p in enumerate(parts):
            _acc(p, g[i] if nd == 0 else g[:, i])

    return t._append(out, back)


# ---------------------------------------------------------------------------
# generic dispatch by op kind
# ---------------------------------------------------------------------------

BINARY_OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "matvec": matvec,
    "matmul": matmul,
    "matmul_t": matmul_t,
    "dot": dot,
    "concat": concat,
}

UNARY_OPS = {
    "neg": neg,
    "tanh": tanh,
    "relu": relu,
    "arctan": arctan,
    "square": square,
    "sqrt": sqrt,
    "l2norm": l2norm,
    "rownorm": rownorm,
    "mean": mean,
}

PARAMETRIC_OPS = {
    "scale": scale,
    "add_const": add_const,
}


def record_binary(kind: str, lhs: Var, rhs: Var) -> Var:
    try:
        op = BINARY_OPS[kind]
    except KeyError:
        raise ValueError(f"unknown binary op kind {kind!r}") from None
    return op(lhs, rhs)


def record_unary(kind: str, x: Var, c: float | None = None) -> Var:
    if kind in UNARY_OPS:
        if c is not None:
            raise ValueError(f"op kind {kind!r} takes no constant")
        return UNARY_OPS[kind](x)
    if kind in PARAMETRIC_OPS:
        if c is None:
            raise ValueError(f"op kind {kind!r} needs a constant")
        return PARAMETRIC_OPS[kind](x, c)
    raise ValueError(f"unknown unary op kind {kind!r}")
