"""
Dual numbers carrying a time tangent.

A Dual holds a primal and its directional derivative with respect to the time
input. Both components may be plain arrays or tape Variables; tangent rules
are written with the functional ops, so when the components live on a tape
the tangent computation is recorded too and reverse mode can differentiate
through it. A tangent of None is an exact zero (the value does not depend on
time).
"""

from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import ops
from ..utils.error_handling import AutodiffError


class Dual:
    __array_ufunc__ = None

    def __init__(self, primal, tangent=None):
        self.primal = primal
        self.tangent = tangent

    @property
    def shape(self) -> Tuple[int, ...]:
        return ops.shape_of(self.primal)

    def tangent_or_zeros(self):
        return np.zeros(self.shape) if self.tangent is None else self.tangent

    def __repr__(self) -> str:
        return f"Dual(shape={self.shape}, has_tangent={self.tangent is not None})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return ops.getitem(self, index)


def seed(t) -> Dual:
    """Time input with unit tangent."""
    return Dual(t, np.ones_like(ops.value(t)))


def _split(x) -> Tuple[object, Optional[object]]:
    if isinstance(x, Dual):
        return x.primal, x.tangent
    return x, None


def _plus(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return ops.add(a, b)


def add(a, b) -> Dual:
    ap, at = _split(a)
    bp, bt = _split(b)
    return Dual(ops.add(ap, bp), _plus(at, bt))


def sub(a, b) -> Dual:
    ap, at = _split(a)
    bp, bt = _split(b)
    return Dual(ops.sub(ap, bp), _plus(at, None if bt is None else ops.neg(bt)))


def neg(a) -> Dual:
    ap, at = _split(a)
    return Dual(ops.neg(ap), None if at is None else ops.neg(at))


def mul(a, b) -> Dual:
    ap, at = _split(a)
    bp, bt = _split(b)
    return Dual(
        ops.mul(ap, bp),
        _plus(None if at is None else ops.mul(at, bp), None if bt is None else ops.mul(ap, bt)),
    )


def div(a, b) -> Dual:
    ap, at = _split(a)
    bp, bt = _split(b)
    out = ops.div(ap, bp)
    # (a/b)' = (a' - (a/b) b') / b
    numerator = _plus(at, None if bt is None else ops.neg(ops.mul(out, bt)))
    return Dual(out, None if numerator is None else ops.div(numerator, bp))


def matmul(a, b) -> Dual:
    ap, at = _split(a)
    bp, bt = _split(b)
    return Dual(
        ops.matmul(ap, bp),
        _plus(None if at is None else ops.matmul(at, bp), None if bt is None else ops.matmul(ap, bt)),
    )


def _chain(a, f: Callable, dfdx: Callable) -> Dual:
    """Unary smooth primitive: tangent = f'(primal) * tangent."""
    ap, at = _split(a)
    out = f(ap)
    return Dual(out, None if at is None else ops.mul(dfdx(ap, out), at))


def power(a, exponent: float) -> Dual:
    return _chain(a, lambda x: ops.power(x, exponent), lambda x, y: ops.mul(exponent, ops.power(x, exponent - 1)))


def square(a) -> Dual:
    return _chain(a, ops.square, lambda x, y: ops.mul(2.0, x))


def sqrt(a) -> Dual:
    return _chain(a, ops.sqrt, lambda x, y: ops.div(0.5, y))


def tanh(a) -> Dual:
    return _chain(a, ops.tanh, lambda x, y: ops.sub(1.0, ops.square(y)))


def exp(a) -> Dual:
    return _chain(a, ops.exp, lambda x, y: y)


def log(a) -> Dual:
    return _chain(a, ops.log, lambda x, y: ops.div(1.0, x))


def sigmoid(a) -> Dual:
    return _chain(a, ops.sigmoid, lambda x, y: ops.mul(y, ops.sub(1.0, y)))


def softplus(a) -> Dual:
    return _chain(a, ops.softplus, lambda x, y: ops.sigmoid(x))


def linear(a, f: Callable) -> Dual:
    """Primitive linear in its operand (sum, reshape, slicing ...)."""
    ap, at = _split(a)
    return Dual(f(ap), None if at is None else f(at))


def join(items: Sequence, f: Callable) -> Dual:
    parts = [_split(x) for x in items]
    primal = f([p for p, _ in parts])
    if all(t is None for _, t in parts):
        return Dual(primal, None)
    tangents = [np.zeros(ops.shape_of(p)) if t is None else t for p, t in parts]
    return Dual(primal, f(tangents))


def nonsmooth(name: str, a, f: Callable) -> Dual:
    """Kinked primitives are rejected on the time path."""
    ap, at = _split(a)
    if at is not None:
        raise AutodiffError(f"'{name}' is not differentiable along the time input", primitive=name)
    return Dual(f(ap) if not isinstance(ap, ops.Variable) else getattr(ops, name)(ap), None)


def time_tangent(model_forward: Callable, t):
    """
    Evaluate `model_forward` at time `t` with unit tangent seeded on `t`.

    Returns (primal, tangent); an output that does not depend on `t` gets an
    exact zero tangent.
    """
    out = model_forward(seed(t))
    if isinstance(out, Dual):
        return out.primal, out.tangent_or_zeros()
    return out, np.zeros(ops.shape_of(out))
