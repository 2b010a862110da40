"""
Reverse-mode differentiation on an append-only tape.

Each primitive evaluates its output with numpy and records one node holding
the output value, the primitive name and one vector-Jacobian product per
differentiable operand. Append order is a topological order, so the backward
sweep visits every node once in reverse.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ..utils.error_handling import AutodiffError

logger = logging.getLogger(__name__)

Vjp = Callable[[np.ndarray], np.ndarray]


class Tape:
    """Append-only record of primitive applications."""

    def __init__(self):
        self.nodes: List["Variable"] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, node: "Variable") -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def variable(self, value) -> "Variable":
        """Register a leaf (an independent input)."""
        return Variable(np.array(value, dtype=float), self, (), "leaf")

    def backward(self, output: "Variable", seed: Optional[np.ndarray] = None) -> Dict[int, np.ndarray]:
        """
        Accumulate adjoints from `output` back to the leaves.

        Returns a map from node index to adjoint for every leaf reached.
        """
        if output.tape is not self:
            raise AutodiffError("output was recorded on a different tape", primitive=output.primitive)
        adjoints: Dict[int, np.ndarray] = {
            output.index: np.ones_like(output.value) if seed is None else np.asarray(seed, dtype=float)
        }
        leaves: Dict[int, np.ndarray] = {}
        for node in reversed(self.nodes[: output.index + 1]):
            g = adjoints.pop(node.index, None)
            if g is None:
                continue
            if not node.parents:
                leaves[node.index] = g
                continue
            for parent, vjp in node.parents:
                contribution = vjp(g)
                if not np.all(np.isfinite(contribution)):
                    raise AutodiffError(
                        f"non-finite adjoint propagated through '{node.primitive}' (node {node.index})",
                        primitive=node.primitive,
                    )
                if parent.index in adjoints:
                    adjoints[parent.index] = adjoints[parent.index] + contribution
                else:
                    adjoints[parent.index] = contribution
        return leaves


class Variable:
    """A value recorded on a tape."""

    # ndarray (op) Variable must defer to the reflected operator below
    __array_ufunc__ = None

    def __init__(self, value: np.ndarray, tape: Tape, parents: Tuple[Tuple["Variable", Vjp], ...], primitive: str):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.primitive = primitive
        self.index = tape._append(self)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return int(self.value.size)

    def __repr__(self) -> str:
        return f"Variable({self.primitive}, shape={self.shape}, index={self.index})"

    def __float__(self) -> float:
        return float(self.value)

    # Operators route through the dispatching functional layer so that a
    # Dual operand takes precedence over a Variable.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __pow__(self, exponent):
        from . import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Variable) else np.asarray(x, dtype=float)


def _record(primitive: str, value, operands: Sequence[Tuple[object, Vjp]]) -> Variable:
    value = np.asarray(value, dtype=float)
    parents = tuple((op, vjp) for op, vjp in operands if isinstance(op, Variable))
    if not parents:
        raise AutodiffError(f"'{primitive}' recorded without a tape operand", primitive=primitive)
    tape = parents[0][0].tape
    if any(p.tape is not tape for p, _ in parents):
        raise AutodiffError(f"'{primitive}' mixes operands from different tapes", primitive=primitive)
    if not np.all(np.isfinite(value)):
        raise AutodiffError(f"non-finite output of primitive '{primitive}'", primitive=primitive)
    return Variable(value, tape, parents, primitive)


def unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum an adjoint over the axes numpy broadcasting added or stretched."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# --- elementwise ---

def add(a, b) -> Variable:
    av, bv = value_of(a), value_of(b)
    return _record("add", av + bv, [(a, lambda g: unbroadcast(g, av.shape)), (b, lambda g: unbroadcast(g, bv.shape))])


def sub(a, b) -> Variable:
    av, bv = value_of(a), value_of(b)
    return _record("sub", av - bv, [(a, lambda g: unbroadcast(g, av.shape)), (b, lambda g: unbroadcast(-g, bv.shape))])


def neg(a) -> Variable:
    return _record("neg", -value_of(a), [(a, lambda g: -g)])


def mul(a, b) -> Variable:
    av, bv = value_of(a), value_of(b)
    return _record(
        "mul", av * bv, [(a, lambda g: unbroadcast(g * bv, av.shape)), (b, lambda g: unbroadcast(g * av, bv.shape))]
    )


def div(a, b) -> Variable:
    av, bv = value_of(a), value_of(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av / bv
    return _record(
        "div",
        out,
        [(a, lambda g: unbroadcast(g / bv, av.shape)), (b, lambda g: unbroadcast(-g * out / bv, bv.shape))],
    )


def power(a, exponent: float) -> Variable:
    av = value_of(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av ** exponent
    return _record("power", out, [(a, lambda g: g * exponent * av ** (exponent - 1))])


def square(a) -> Variable:
    av = value_of(a)
    return _record("square", av * av, [(a, lambda g: 2.0 * g * av)])


def sqrt(a) -> Variable:
    av = value_of(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(av)
    return _record("sqrt", out, [(a, lambda g: 0.5 * g / out)])


def tanh(a) -> Variable:
    out = np.tanh(value_of(a))
    return _record("tanh", out, [(a, lambda g: g * (1.0 - out * out))])


def exp(a) -> Variable:
    with np.errstate(over="ignore"):
        out = np.exp(value_of(a))
    return _record("exp", out, [(a, lambda g: g * out)])


def log(a) -> Variable:
    av = value_of(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _record("log", out, [(a, lambda g: g / av)])


def sigmoid(a) -> Variable:
    out = expit(value_of(a))
    return _record("sigmoid", out, [(a, lambda g: g * out * (1.0 - out))])


def softplus(a) -> Variable:
    av = value_of(a)
    return _record("softplus", np.logaddexp(0.0, av), [(a, lambda g: g * expit(av))])


def abs_(a) -> Variable:
    av = value_of(a)
    return _record("abs", np.abs(av), [(a, lambda g: g * np.sign(av))])


# --- linear algebra ---

def matmul(a, b) -> Variable:
    av, bv = value_of(a), value_of(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise AutodiffError("matmul operands must have at least two dimensions", primitive="matmul")
    return _record(
        "matmul",
        av @ bv,
        [
            (a, lambda g: unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)),
            (b, lambda g: unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)),
        ],
    )


def norm(a) -> Variable:
    av = value_of(a)
    out = np.sqrt(np.sum(av * av))
    return _record("norm", out, [(a, lambda g: g * av / out if out > 0 else np.zeros_like(av))])


# --- reductions and shape ---

def sum_(a, axis=None, keepdims: bool = False) -> Variable:
    av = value_of(a)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape).copy()

    return _record("sum", np.sum(av, axis=axis, keepdims=keepdims), [(a, vjp)])


def mean(a, axis=None, keepdims: bool = False) -> Variable:
    av = value_of(a)
    count = av.size if axis is None else int(np.prod([av.shape[i] for i in np.atleast_1d(axis)]))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g / count, av.shape).copy()

    return _record("mean", np.mean(av, axis=axis, keepdims=keepdims), [(a, vjp)])


def reshape(a, shape) -> Variable:
    av = value_of(a)
    return _record("reshape", av.reshape(shape), [(a, lambda g: g.reshape(av.shape))])


def broadcast_to(a, shape) -> Variable:
    av = value_of(a)
    return _record("broadcast_to", np.broadcast_to(av, shape).copy(), [(a, lambda g: unbroadcast(g, av.shape))])


def concat(items: Sequence, axis: int = 0) -> Variable:
    values = [value_of(x) for x in items]
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

    def make_vjp(k):
        return lambda g: np.split(g, bounds, axis=axis)[k]

    return _record("concat", np.concatenate(values, axis=axis), [(x, make_vjp(k)) for k, x in enumerate(items)])


def stack(items: Sequence, axis: int = 0) -> Variable:
    values = [value_of(x) for x in items]

    def make_vjp(k):
        return lambda g: np.take(g, k, axis=axis)

    return _record("stack", np.stack(values, axis=axis), [(x, make_vjp(k)) for k, x in enumerate(items)])


def getitem(a, index) -> Variable:
    av = value_of(a)

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, index, g)
        return out

    return _record("getitem", av[index], [(a, vjp)])
