"""
Gradients of scalar loss builders and finite-difference checks against them.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from . import ops
from .dual import time_tangent
from .tape import Tape, Variable
from ..utils.error_handling import AutodiffError

logger = logging.getLogger(__name__)

LossBuilder = Callable[[object], object]


def value_and_grad(loss_builder: LossBuilder, params) -> Tuple[float, np.ndarray]:
    """Evaluate `loss_builder(params)` on a fresh tape and return (loss, gradient)."""
    params = np.asarray(params, dtype=float)
    tape = Tape()
    x = tape.variable(params)
    loss = loss_builder(x)
    if not isinstance(loss, Variable):
        # loss does not depend on params
        return float(np.asarray(loss)), np.zeros_like(params)
    if loss.size != 1:
        raise AutodiffError(f"loss must be scalar, got shape {loss.shape}", primitive=loss.primitive)
    adjoints = tape.backward(loss)
    return float(loss.value), adjoints.get(x.index, np.zeros_like(params)).reshape(params.shape)


def grad(loss_builder: LossBuilder, params) -> np.ndarray:
    return value_and_grad(loss_builder, params)[1]


def numerical_gradient(loss_builder: LossBuilder, params, h: float = 1e-5) -> np.ndarray:
    """Central differences; the builder is evaluated on plain arrays."""
    params = np.asarray(params, dtype=float)
    out = np.zeros_like(params)
    flat = out.reshape(-1)
    for i in range(params.size):
        step = np.zeros(params.size)
        step[i] = h
        step = step.reshape(params.shape)
        f_plus = float(np.asarray(loss_builder(params + step)))
        f_minus = float(np.asarray(loss_builder(params - step)))
        flat[i] = (f_plus - f_minus) / (2.0 * h)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = None) -> np.ndarray:
    """
    |a - n| / max(|a|, |n|, floor), elementwise.

    The floor defaults to 1e-6 * max(1, max|n|) so components that are zero
    up to round-off do not dominate.
    """
    if floor is None:
        floor = 1e-6 * max(1.0, float(np.max(np.abs(numeric), initial=0.0)))
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


@dataclass(frozen=True)
class GradcheckResult:
    max_relative_error: float
    analytic: np.ndarray
    numeric: np.ndarray
    worst_index: int

    def passed(self, tolerance: float) -> bool:
        return self.max_relative_error < tolerance


def gradcheck(loss_builder: LossBuilder, params, h: float = 1e-5) -> GradcheckResult:
    analytic = grad(loss_builder, params)
    numeric = numerical_gradient(loss_builder, params, h)
    err = relative_error(analytic, numeric)
    worst = int(np.argmax(err)) if err.size else 0
    result = GradcheckResult(float(err.max(initial=0.0)), analytic, numeric, worst)
    logger.info("gradcheck: %d parameters, max relative error %.3e at %d", err.size, result.max_relative_error, worst)
    return result


def mixed_gradcheck(
    model_forward: Callable[[object, object], object],
    params,
    t,
    h_params: float = 1e-4,
    h_time: float = 1e-4,
) -> GradcheckResult:
    """
    Check d/dparams of sum(d model_forward(params, t) / dt).

    The engine side seeds a tangent on `t` and differentiates the tangent in
    reverse mode; the reference nests central differences in t inside central
    differences in the parameters.
    """
    t = np.asarray(t, dtype=float)

    def tangent_sum(p):
        _, tangent = time_tangent(lambda tt: model_forward(p, tt), t)
        return ops.sum(tangent)

    def fd_time(p):
        plus = np.sum(np.asarray(model_forward(p, t + h_time)))
        minus = np.sum(np.asarray(model_forward(p, t - h_time)))
        return (plus - minus) / (2.0 * h_time)

    analytic = grad(tangent_sum, params)
    numeric = numerical_gradient(fd_time, params, h_params)
    err = relative_error(analytic, numeric)
    worst = int(np.argmax(err)) if err.size else 0
    result = GradcheckResult(float(err.max(initial=0.0)), analytic, numeric, worst)
    logger.info("mixed gradcheck: max relative error %.3e", result.max_relative_error)
    return result
