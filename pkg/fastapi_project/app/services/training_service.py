"""
Training Service

Full-batch Adam with global-norm gradient clipping, validation-based early
stopping after a warm-up with best-snapshot restore, and seed ensembles.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff import value_and_grad
from ..domain import AdjacencyMatrix, DataSplit, TimeSeriesPanel
from ..schemas import LossConfig, ModelConfig, TrainConfig
from ..utils.error_handling import AutodiffError, TrainingDivergedError
from .pignn_service import PiGnnModel, check_scaled_inputs, init_model, make_batch, total_loss, validation_loss

logger = logging.getLogger(__name__)


def clip_by_global_norm(grad: np.ndarray, max_norm: float) -> Tuple[np.ndarray, float]:
    """Rescale `grad` to norm `max_norm` when its norm exceeds it. Returns (clipped, original norm)."""
    norm = float(np.sqrt(np.sum(np.square(grad))))
    if norm > max_norm and norm > 0:
        return grad * (max_norm / norm), norm
    return grad, norm


class Adam:
    """Adam with bias correction: theta -= lr * m_hat / (sqrt(v_hat) + eps). lr may be per-parameter."""

    def __init__(self, learning_rate: Union[float, np.ndarray] = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: Optional[np.ndarray] = None
        self.v: Optional[np.ndarray] = None
        self.t = 0

    @classmethod
    def from_config(cls, config: TrainConfig) -> "Adam":
        return cls(config.learning_rate, config.beta1, config.beta2, config.eps)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    grad_norm: float


@dataclass
class TrainResult:
    model: PiGnnModel
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    duration_s: float = 0.0

    @property
    def best_val_loss(self) -> float:
        return self.history[self.best_epoch].val_loss if self.history else float("nan")

    def losses(self) -> List[Dict[str, float]]:
        return [asdict(r) for r in self.history]


def learning_rates(model: PiGnnModel, config: TrainConfig) -> np.ndarray:
    """Per-parameter step sizes: the raw connectivity block moves `connectivity_lr_scale` times faster."""
    rates = np.full(model.layout.size, config.learning_rate)
    lo, hi, _ = model.layout.offsets()["F_raw"]
    rates[lo:hi] *= config.connectivity_lr_scale
    return rates


def train(
    model: PiGnnModel,
    panel: TimeSeriesPanel,
    split: DataSplit,
    config: TrainConfig = None,
    loss_config: LossConfig = None,
) -> TrainResult:
    """
    Full-batch training on the split's training rows.

    Epoch 0 records the initial parameters. Each later epoch clips the
    gradient to the configured global norm, takes one Adam step and evaluates
    the supervised validation loss. Snapshot selection and the patience
    count start at the end of the warm-up; the snapshot with the least
    validation loss from then on is returned. A run shorter than the warm-up
    returns its last epoch.
    """
    config = config or TrainConfig()
    loss_config = loss_config or LossConfig()
    started = time.perf_counter()

    train_batch = make_batch(model, panel, split.train)
    val_batch = make_batch(model, panel, split.validation)
    check_scaled_inputs(train_batch.inputs)
    check_scaled_inputs(val_batch.inputs)

    def objective(params):
        return total_loss(model, params, train_batch, loss_config)

    params = np.array(model.params, dtype=float)
    optimizer = Adam.from_config(config)
    optimizer.learning_rate = learning_rates(model, config)
    selection_start = min(config.warmup_epochs, config.max_epochs)

    initial_loss = float(np.asarray(objective(params)))
    best_val = validation_loss(model, params, val_batch, loss_config)
    best_params, best_epoch = params.copy(), 0
    history = [EpochRecord(0, initial_loss, best_val, 0.0)]
    if not np.isfinite(initial_loss):
        raise TrainingDivergedError(0, initial_loss)

    since_best = 0
    stopped_early = False
    for epoch in range(1, config.max_epochs + 1):
        try:
            loss, grad = value_and_grad(objective, params)
        except AutodiffError as exc:
            raise TrainingDivergedError(epoch, float("nan")) from exc
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)

        grad, grad_norm = clip_by_global_norm(grad, config.clip_norm)
        params = optimizer.step(params, grad)
        val = validation_loss(model, params, val_batch, loss_config)
        if not np.isfinite(val):
            raise TrainingDivergedError(epoch, val)
        history.append(EpochRecord(epoch, loss, val, grad_norm))
        if epoch % 500 == 0:
            logger.debug("epoch %d: train %.6g val %.6g |g| %.3g", epoch, loss, val, grad_norm)
        if epoch < selection_start:
            continue

        if val < best_val or epoch == selection_start:
            best_val, best_params, best_epoch = val, params.copy(), epoch
            since_best = 0
        else:
            since_best += 1
        if since_best >= config.patience:
            stopped_early = True
            logger.info("Early stop at epoch %d (best epoch %d, val %.6g)", epoch, best_epoch, best_val)
            break

    duration = time.perf_counter() - started
    logger.info("Trained seed %d for %d epochs in %.1fs", model.seed, history[-1].epoch, duration)
    return TrainResult(
        model=model.with_params(best_params),
        history=history,
        best_epoch=best_epoch,
        stopped_early=stopped_early,
        duration_s=duration,
    )


def train_ensemble(
    panel: TimeSeriesPanel,
    split: DataSplit,
    model_config: ModelConfig,
    loss_config: LossConfig = None,
    train_config: TrainConfig = None,
    adjacency: Optional[AdjacencyMatrix] = None,
    seeds: Optional[Sequence[int]] = None,
) -> List[TrainResult]:
    """One independently initialized and trained model per seed (10 seeds by default)."""
    train_config = train_config or TrainConfig()
    seeds = list(train_config.seeds if seeds is None else seeds)
    results = []
    for seed in seeds:
        model = init_model(panel, split.train, model_config, adjacency=adjacency, seed=seed)
        results.append(train(model, panel, split, train_config, loss_config))
    return results
