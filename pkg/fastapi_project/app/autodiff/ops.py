"""
Functional operations dispatching on operand type.

- plain arrays evaluate with numpy (prediction path, finite differences)
- any Variable operand records on its tape
- any Dual operand propagates a time tangent (whose arithmetic is itself
  recorded when the components are Variables)
"""

from typing import Sequence

import numpy as np
from scipy.special import expit

from . import dual as _dual
from . import tape as _tape
from .tape import Variable


def _has_dual(*xs) -> bool:
    return any(isinstance(x, _dual.Dual) for x in xs)


def _has_var(*xs) -> bool:
    return any(isinstance(x, Variable) for x in xs)


def add(a, b):
    if _has_dual(a, b):
        return _dual.add(a, b)
    if _has_var(a, b):
        return _tape.add(a, b)
    return np.add(a, b)


def sub(a, b):
    if _has_dual(a, b):
        return _dual.sub(a, b)
    if _has_var(a, b):
        return _tape.sub(a, b)
    return np.subtract(a, b)


def neg(a):
    if _has_dual(a):
        return _dual.neg(a)
    if _has_var(a):
        return _tape.neg(a)
    return np.negative(a)


def mul(a, b):
    if _has_dual(a, b):
        return _dual.mul(a, b)
    if _has_var(a, b):
        return _tape.mul(a, b)
    return np.multiply(a, b)


def div(a, b):
    if _has_dual(a, b):
        return _dual.div(a, b)
    if _has_var(a, b):
        return _tape.div(a, b)
    return np.divide(a, b)


def power(a, exponent: float):
    if _has_dual(a):
        return _dual.power(a, exponent)
    if _has_var(a):
        return _tape.power(a, exponent)
    return np.power(a, exponent)


def square(a):
    if _has_dual(a):
        return _dual.square(a)
    if _has_var(a):
        return _tape.square(a)
    return np.square(a)


def sqrt(a):
    if _has_dual(a):
        return _dual.sqrt(a)
    if _has_var(a):
        return _tape.sqrt(a)
    return np.sqrt(a)


def tanh(a):
    if _has_dual(a):
        return _dual.tanh(a)
    if _has_var(a):
        return _tape.tanh(a)
    return np.tanh(a)


def exp(a):
    if _has_dual(a):
        return _dual.exp(a)
    if _has_var(a):
        return _tape.exp(a)
    return np.exp(a)


def log(a):
    if _has_dual(a):
        return _dual.log(a)
    if _has_var(a):
        return _tape.log(a)
    return np.log(a)


def sigmoid(a):
    if _has_dual(a):
        return _dual.sigmoid(a)
    if _has_var(a):
        return _tape.sigmoid(a)
    return expit(a)


def softplus(a):
    if _has_dual(a):
        return _dual.softplus(a)
    if _has_var(a):
        return _tape.softplus(a)
    return np.logaddexp(0.0, a)


def abs(a):  # noqa: A001
    if _has_dual(a):
        return _dual.nonsmooth("abs", a, np.abs)
    if _has_var(a):
        return _tape.abs_(a)
    return np.abs(a)


def matmul(a, b):
    if _has_dual(a, b):
        return _dual.matmul(a, b)
    if _has_var(a, b):
        return _tape.matmul(a, b)
    return np.matmul(a, b)


def norm(a):
    if _has_dual(a):
        return _dual.nonsmooth("norm", a, np.linalg.norm)
    if _has_var(a):
        return _tape.norm(a)
    return np.sqrt(np.sum(np.square(a)))


def sum(a, axis=None, keepdims: bool = False):  # noqa: A001
    if _has_dual(a):
        return _dual.linear(a, lambda x: sum(x, axis=axis, keepdims=keepdims))
    if _has_var(a):
        return _tape.sum_(a, axis=axis, keepdims=keepdims)
    return np.sum(a, axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims: bool = False):
    if _has_dual(a):
        return _dual.linear(a, lambda x: mean(x, axis=axis, keepdims=keepdims))
    if _has_var(a):
        return _tape.mean(a, axis=axis, keepdims=keepdims)
    return np.mean(a, axis=axis, keepdims=keepdims)


def reshape(a, shape):
    if _has_dual(a):
        return _dual.linear(a, lambda x: reshape(x, shape))
    if _has_var(a):
        return _tape.reshape(a, shape)
    return np.reshape(a, shape)


def broadcast_to(a, shape):
    if _has_dual(a):
        return _dual.linear(a, lambda x: broadcast_to(x, shape))
    if _has_var(a):
        return _tape.broadcast_to(a, shape)
    return np.broadcast_to(a, shape).copy()


def getitem(a, index):
    if _has_dual(a):
        return _dual.linear(a, lambda x: getitem(x, index))
    if _has_var(a):
        return _tape.getitem(a, index)
    return np.asarray(a)[index]


def concat(items: Sequence, axis: int = 0):
    if _has_dual(*items):
        return _dual.join(items, lambda xs: concat(xs, axis=axis))
    if _has_var(*items):
        return _tape.concat(items, axis=axis)
    return np.concatenate(items, axis=axis)


def stack(items: Sequence, axis: int = 0):
    if _has_dual(*items):
        return _dual.join(items, lambda xs: stack(xs, axis=axis))
    if _has_var(*items):
        return _tape.stack(items, axis=axis)
    return np.stack(items, axis=axis)


def value(x) -> np.ndarray:
    """Numeric value of an array, Variable or Dual primal."""
    if isinstance(x, _dual.Dual):
        return value(x.primal)
    return _tape.value_of(x)


def shape_of(x):
    return value(x).shape
