"""Reverse-mode automatic differentiation over a dynamically built tape.

Variables hold float64 numpy arrays (scalars are 0-d arrays), so a single
tape node can carry a whole batch of sample points; elementwise operations
follow numpy broadcasting and the backward pass sums adjoints over
broadcast axes.  Constants (plain numbers or arrays) may appear as operands
anywhere and are detached: they get no tape index and no gradient.

Besides the elementwise primitives the tape records three structural
operations needed to express feedforward networks over batches: ``linear``
(x @ w.T), ``take`` (slice of a flat parameter vector, reshaped), and
``asum`` (reduction to a scalar).

The smoothed-absolute-value primitives deserve a note.  ``abs_smooth(s)``
is the C^1 Huber surrogate psi(|s|) of a signed scalar; ``huber_sqrt(s)``
evaluates psi(sqrt(s)) for s >= 0 so that psi of a Euclidean norm can be
differentiated through the squared norm, which keeps the derivative finite
when the norm vanishes (a sqrt node followed by psi would produce inf * 0
adjoints there).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericError

__all__ = [
    "Tape",
    "Var",
    "NodeRecord",
    "backward",
    "grad_check",
    "tanh",
    "exp",
    "square",
    "sqrt",
    "abs_smooth",
    "huber_sqrt",
    "linear",
    "take",
    "reshape",
    "asum",
    "item",
]


@dataclass(frozen=True, slots=True, eq=False)
class NodeRecord:
    """One taped operation: kind, parent node indices (None marks a detached
    constant operand), per-parent partial data, and the primal value."""

    kind: str
    parents: tuple
    partials: tuple
    value: np.ndarray


@dataclass(frozen=True, slots=True, eq=False)
class Var:
    """Handle to a tape node: the owning tape, its index, and the primal."""

    tape: "Tape"
    index: int
    value: np.ndarray

    # keep numpy from consuming Var in mixed expressions; defer to the
    # reflected operators below
    __array_ufunc__ = None

    def __add__(self, other):
        return _binary("add", self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _binary("sub", self, other)

    def __rsub__(self, other):
        return _binary("sub", other, self)

    def __mul__(self, other):
        return _binary("mul", self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary("div", self, other)

    def __rtruediv__(self, other):
        return _binary("div", other, self)

    def __neg__(self):
        return _binary("sub", 0.0, self)


class Tape:
    """Append-only record of operations; parents always precede children."""

    def __init__(self):
        self.records: list[NodeRecord] = []
        self.leaf_indices: list[int] = []

    def _push(self, kind, parents, partials, value) -> Var:
        value = np.asarray(value, dtype=np.float64)
        self.records.append(NodeRecord(kind, parents, partials, value))
        return Var(self, len(self.records) - 1, value)

    def leaf(self, value) -> Var:
        """Register an input variable (a gradient is reported for each leaf)."""
        var = self._push("leaf", (), (), value)
        self.leaf_indices.append(var.index)
        return var


def _as_value(x) -> np.ndarray:
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _tape_of(*operands) -> Tape:
    tape = None
    for op in operands:
        if isinstance(op, Var):
            if tape is None:
                tape = op.tape
            elif op.tape is not tape:
                raise ValueError("operands belong to different tapes")
    if tape is None:
        raise ValueError("at least one operand must be a tape variable")
    return tape


def _parent(x) -> int | None:
    return x.index if isinstance(x, Var) else None


def _binary(kind: str, a, b) -> Var:
    tape = _tape_of(a, b)
    av, bv = _as_value(a), _as_value(b)
    if kind == "add":
        value = av + bv
        partials = (1.0, 1.0)
    elif kind == "sub":
        value = av - bv
        partials = (1.0, -1.0)
    elif kind == "mul":
        value = av * bv
        partials = (bv, av)
    elif kind == "div":
        if np.any(bv == 0.0):
            raise NumericError("div: division by zero")
        value = av / bv
        partials = (1.0 / bv, -value / bv)
    else:  # pragma: no cover
        raise ValueError(kind)
    return tape._push(kind, (_parent(a), _parent(b)), partials, value)


def _unary(kind: str, a: Var, value, partial) -> Var:
    return a.tape._push(kind, (a.index,), (partial,), value)


def tanh(a: Var) -> Var:
    t = np.tanh(a.value)
    return _unary("tanh", a, t, 1.0 - t * t)


def exp(a: Var) -> Var:
    e = np.exp(a.value)
    return _unary("exp", a, e, e)


def square(a: Var) -> Var:
    return _unary("square", a, a.value * a.value, 2.0 * a.value)


def sqrt(a: Var) -> Var:
    if np.any(a.value < 0.0):
        raise NumericError("sqrt: negative argument")
    r = np.sqrt(a.value)
    with np.errstate(divide="ignore"):
        partial = np.where(r > 0.0, 0.5 / np.where(r > 0.0, r, 1.0), np.inf)
    return _unary("sqrt", a, r, partial)


def abs_smooth(a: Var, zeta: float) -> Var:
    """Huber surrogate psi(|s|): |s| above zeta, quadratic below, C^1 at the knee."""
    if not zeta > 0.0:
        raise NumericError("abs_smooth: zeta must be positive")
    s = a.value
    mag = np.abs(s)
    big = mag >= zeta
    value = np.where(big, mag, s * s / (2.0 * zeta) + zeta / 2.0)
    partial = np.where(big, np.sign(s), s / zeta)
    return _unary("abs_smooth", a, value, partial)


def huber_sqrt(a: Var, zeta: float) -> Var:
    """psi(sqrt(s)) for s >= 0, with the derivative taken in s (finite at 0)."""
    if not zeta > 0.0:
        raise NumericError("huber_sqrt: zeta must be positive")
    s = a.value
    if np.any(s < 0.0):
        raise NumericError("huber_sqrt: negative argument")
    root = np.sqrt(s)
    big = root >= zeta
    value = np.where(big, root, s / (2.0 * zeta) + zeta / 2.0)
    partial = np.where(big, 0.5 / np.where(big, root, 1.0), 0.5 / zeta)
    return _unary("huber_sqrt", a, value, partial)


def linear(x, w) -> Var:
    """x @ w.T for x of shape (n, d_in) and w of shape (d_out, d_in)."""
    tape = _tape_of(x, w)
    xv, wv = _as_value(x), _as_value(w)
    return tape._push("linear", (_parent(x), _parent(w)), (xv, wv), xv @ wv.T)


def take(a: Var, start: int, stop: int, shape: tuple) -> Var:
    """Slice [start:stop] of a flat vector, reshaped; adjoints scatter back."""
    flat = a.value.reshape(-1)
    if not (0 <= start <= stop <= flat.size):
        raise ValueError(f"take: slice [{start}:{stop}] out of range for size {flat.size}")
    return a.tape._push("take", (a.index,), (start, stop), flat[start:stop].reshape(shape))


def item(a: Var, i: int) -> Var:
    """Scalar element a[i] of a flat vector variable."""
    return take(a, i, i + 1, ())


def reshape(a: Var, shape: tuple) -> Var:
    return a.tape._push("reshape", (a.index,), (), a.value.reshape(shape))


def asum(a: Var) -> Var:
    """Sum of all elements, as a scalar variable."""
    return a.tape._push("asum", (a.index,), (), np.sum(a.value))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g over the axes that numpy broadcasting expanded from shape."""
    g = np.asarray(g)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(tape: Tape, output: Var) -> list[np.ndarray]:
    """Gradient of a scalar output with respect to every leaf of the tape.

    Returns one array per leaf, in leaf-registration order; leaves that do
    not influence the output get zeros.
    """
    if output.tape is not tape:
        raise ValueError("output variable does not belong to this tape")
    if output.value.size != 1:
        raise ValueError("backward requires a scalar output")
    adj: list = [None] * (output.index + 1)
    # owned[i] marks adjoints this pass allocated itself (safe for in-place
    # accumulation); pass-through adjoints alias a child's array
    owned = bytearray(output.index + 1)
    adj[output.index] = np.ones_like(output.value)
    owned[output.index] = 1

    records = tape.records

    def accumulate(idx, contrib, fresh):
        cur = adj[idx]
        if cur is None:
            adj[idx] = contrib
            owned[idx] = fresh
        elif owned[idx] and cur.shape == np.shape(contrib):
            cur += contrib
        else:
            adj[idx] = cur + contrib
            owned[idx] = 1

    for idx in range(output.index, -1, -1):
        a = adj[idx]
        if a is None:
            continue
        rec = records[idx]
        kind = rec.kind
        if kind == "leaf":
            continue
        if kind == "linear":
            xv, wv = rec.partials
            px, pw = rec.parents
            if px is not None:
                accumulate(px, a @ wv, 1)
            if pw is not None:
                accumulate(pw, a.T @ xv, 1)
        elif kind == "take":
            start, stop = rec.partials
            parent_val = records[rec.parents[0]].value
            g = np.zeros(parent_val.size)
            g[start:stop] = np.asarray(a).reshape(-1)
            accumulate(rec.parents[0], g.reshape(parent_val.shape), 1)
        elif kind == "reshape":
            parent_val = records[rec.parents[0]].value
            accumulate(rec.parents[0], np.asarray(a).reshape(parent_val.shape), 0)
        elif kind == "asum":
            parent_val = records[rec.parents[0]].value
            accumulate(rec.parents[0], np.broadcast_to(a, parent_val.shape), 0)
        else:
            for parent, partial in zip(rec.parents, rec.partials):
                if parent is None:
                    continue
                pshape = records[parent].value.shape
                if type(partial) is float and partial == 1.0:
                    contrib, fresh = a, 0
                elif type(partial) is float and partial == -1.0:
                    contrib, fresh = -a, 1
                else:
                    contrib, fresh = a * partial, 1
                red = _unbroadcast(contrib, pshape)
                accumulate(parent, red, 1 if red is not contrib else fresh)

    out = []
    for li in tape.leaf_indices:
        val = tape.records[li].value
        if li <= output.index and adj[li] is not None:
            out.append(np.asarray(adj[li]))
        else:
            out.append(np.zeros_like(val))
    return out


def grad_check(f: Callable[[Var], Var], point, h: float) -> float:
    """Compare the taped gradient of f against central finite differences.

    f maps a single leaf variable (1-d array) to a scalar variable.  Returns
    the maximum over components of |analytic - fd| / max(|analytic|, 1).
    """
    point = np.asarray(point, dtype=np.float64).reshape(-1)
    tape = Tape()
    out = f(tape.leaf(point))
    analytic = backward(tape, out)[0]

    def value_at(p):
        t = Tape()
        return float(f(t.leaf(p)).value)

    worst = 0.0
    for i in range(point.size):
        e = np.zeros_like(point)
        e[i] = h
        fd = (value_at(point + e) - value_at(point - e)) / (2.0 * h)
        disc = abs(float(analytic[i]) - fd) / max(abs(float(analytic[i])), 1.0)
        worst = max(worst, disc)
    return worst
