"""
PI-GNN Service

Graph network over the injector-producer graph with four parallel output
heads (rate, BHP, productivity index, drainage volume), the physics residual
of the producer material balance, and the combined training loss.

Parameters live in one flat vector; every forward pass slices it through the
functional ops, so the same code runs on plain arrays (prediction), on tape
Variables (gradients) and on Duals (time tangents).
"""

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logit

from ..autodiff import ops
from ..autodiff.dual import Dual, seed as seed_time
from ..domain import AdjacencyMatrix, ConnectivityMatrix, TimeSeriesPanel
from ..schemas import LossConfig, ModelConfig
from ..utils.error_handling import ErrorCode, ValidationError
from .preprocessing_service import PanelScalers

logger = logging.getLogger(__name__)

POSITIVE_FLOOR = 1e-8
MIN_J = 1e-12
SCALED_INPUT_RANGE = (-0.5, 1.5)
HEADS = ("q", "pwf", "J", "Vp")
STORAGE_EMBED = "storage.embed"
EMBED_INIT_STD = 0.5


# --- parameter layout ---

@dataclass(frozen=True)
class ParamLayout:
    """Named blocks of the flat parameter vector, in order."""

    blocks: Tuple[Tuple[str, Tuple[int, ...]], ...]

    @property
    def size(self) -> int:
        return int(sum(int(np.prod(shape)) for _, shape in self.blocks))

    def offsets(self) -> Dict[str, Tuple[int, int, Tuple[int, ...]]]:
        out, start = {}, 0
        for name, shape in self.blocks:
            n = int(np.prod(shape))
            out[name] = (start, start + n, shape)
            start += n
        return out

    def unpack(self, flat) -> Dict[str, object]:
        return {
            name: ops.reshape(ops.getitem(flat, slice(lo, hi)), shape)
            for name, (lo, hi, shape) in self.offsets().items()
        }

    def names(self) -> List[str]:
        return [name for name, _ in self.blocks]


def build_layout(config: ModelConfig, n_injectors: int, n_producers: int) -> ParamLayout:
    d, h = config.gcn_width, config.head_width
    blocks: List[Tuple[str, Tuple[int, ...]]] = [("gcn_I.W", (2, d)), ("gcn_I.b", (n_producers, d))]
    if config.use_injector_bhp:
        blocks += [("gcn_pI.W", (2, d)), ("gcn_pI.b", (n_producers, d))]
    width = d * (2 if config.use_injector_bhp else 1)
    if config.storage == "per_producer":
        blocks.append((STORAGE_EMBED, (n_producers, width)))
    for head in HEADS:
        fan_in = width
        for layer in range(config.head_depth):
            blocks += [(f"{head}.W{layer}", (fan_in, h)), (f"{head}.b{layer}", (h,))]
            fan_in = h
        blocks += [(f"{head}.Wout", (fan_in, 1)), (f"{head}.bout", (1,))]
    blocks.append(("F_raw", (n_injectors, n_producers)))
    return ParamLayout(tuple(blocks))


def init_params(layout: ParamLayout, n_injectors: int, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases, normal storage embedding, F_raw at logit(1/N_I)."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(layout.size)
    for name, (lo, hi, shape) in layout.offsets().items():
        if name == "F_raw":
            p = float(np.clip(1.0 / n_injectors, 1e-3, 1.0 - 1e-3))
            flat[lo:hi] = logit(p)
        elif name == STORAGE_EMBED:
            flat[lo:hi] = rng.normal(0.0, EMBED_INIT_STD, size=hi - lo)
        elif ".W" in name:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            flat[lo:hi] = rng.uniform(-limit, limit, size=hi - lo)
    return flat


# --- model ---

@dataclass(frozen=True)
class PiGnnModel:
    config: ModelConfig
    layout: ParamLayout
    params: np.ndarray
    scalers: PanelScalers
    injector_ids: Tuple[str, ...]
    producer_ids: Tuple[str, ...]
    adjacency: Optional[np.ndarray]
    c_t: float
    j_scale: float
    tau_scale: float
    q_norm: float
    seed: int = 0

    def __post_init__(self):
        params = np.array(self.params, dtype=float, copy=True)
        if params.shape != (self.layout.size,):
            raise ValidationError(
                f"parameter vector has {params.size} entries, layout needs {self.layout.size}",
                field="params",
                code=ErrorCode.SHAPE_MISMATCH,
            )
        params.setflags(write=False)
        object.__setattr__(self, "params", params)
        if self.adjacency is not None:
            adj = np.array(self.adjacency, dtype=float, copy=True)
            adj.setflags(write=False)
            object.__setattr__(self, "adjacency", adj)

    @property
    def n_injectors(self) -> int:
        return len(self.injector_ids)

    @property
    def n_producers(self) -> int:
        return len(self.producer_ids)

    @property
    def vp_scale(self) -> float:
        return self.tau_scale * self.j_scale / self.c_t

    def with_params(self, params: np.ndarray) -> "PiGnnModel":
        return replace(self, params=params)


def init_model(
    panel: TimeSeriesPanel,
    train_rows: range,
    config: ModelConfig,
    adjacency: Optional[AdjacencyMatrix] = None,
    seed: int = 0,
) -> PiGnnModel:
    """
    Fresh model with scalers fitted on the training rows.

    Unset head scales derive from the training data: j_scale = mean rate per
    1000 psi, tau_scale = 5% of the training time span.
    """
    if config.graph_mode == "expert":
        if adjacency is None:
            raise ValidationError("expert graph mode needs an adjacency matrix", field="adjacency")
        if adjacency.values.shape != (panel.n_injectors, panel.n_producers):
            raise ValidationError("adjacency does not match the panel wells", field="adjacency",
                                  code=ErrorCode.SHAPE_MISMATCH)
    train = panel.rows(train_rows)
    q_mean = float(np.mean(train.q))
    q_norm = q_mean if q_mean > 0 else 1.0
    span = float(train.times[-1] - train.times[0]) if train.n_rows > 1 else 1.0
    j_scale = config.j_scale or max(q_mean, 1e-6) / 1000.0
    tau_scale = config.tau_scale or max(0.05 * span, 1e-3)

    layout = build_layout(config, panel.n_injectors, panel.n_producers)
    return PiGnnModel(
        config=config,
        layout=layout,
        params=init_params(layout, panel.n_injectors, seed),
        scalers=PanelScalers.fit(panel, train_rows),
        injector_ids=panel.injector_ids,
        producer_ids=panel.producer_ids,
        adjacency=None if config.graph_mode == "self_learned" else adjacency.values,
        c_t=config.c_t,
        j_scale=j_scale,
        tau_scale=tau_scale,
        q_norm=q_norm,
        seed=seed,
    )


# --- layers ---

@dataclass(frozen=True)
class GcnLayer:
    W: object  # [2 x d_out]
    bias: object = None  # [N_P x d_out]
    activation: str = "tanh"


def normalize_adjacency(A):
    """D_I^{-1/2} A D_P^{-1/2}; zero degrees count as 1."""
    shape = ops.shape_of(A)
    d_i = ops.sum(A, axis=1)
    d_p = ops.sum(A, axis=0)
    if not isinstance(A, (ops.Variable, Dual)):
        d_i = np.where(d_i > 0, d_i, 1.0)
        d_p = np.where(d_p > 0, d_p, 1.0)
    left = ops.reshape(ops.power(d_i, -0.5), (shape[0], 1))
    right = ops.reshape(ops.power(d_p, -0.5), (1, shape[1]))
    return ops.mul(ops.mul(A, left), right)


def _activate(x, activation: str):
    if activation == "tanh":
        return ops.tanh(x)
    if activation == "linear":
        return x
    raise ValidationError(f"unknown activation '{activation}'", field="activation")


def gcn_aggregate(H_I, A_hat):
    """Injector signal aggregated per producer: H_I [T x N_I] @ A_hat [N_I x N_P]."""
    return ops.matmul(H_I, A_hat)


def gcn_forward(layer: GcnLayer, H_I, H_P, A, normalized: bool = False):
    """
    Customized graph convolution.

    The aggregated injector signal and the producer's own feature are
    concatenated per producer and projected by W: output [T x N_P x d_out].
    """
    h_i_shape = ops.shape_of(H_I)
    h_p_shape = ops.shape_of(H_P)
    a_shape = ops.shape_of(A)
    if len(h_i_shape) != 2 or len(h_p_shape) != 2 or h_i_shape[0] != h_p_shape[0] \
            or a_shape != (h_i_shape[1], h_p_shape[1]):
        raise ValidationError(
            f"gcn shapes do not align: H_I {h_i_shape}, H_P {h_p_shape}, A {a_shape}",
            code=ErrorCode.SHAPE_MISMATCH,
        )
    A_hat = A if normalized else normalize_adjacency(A)
    features = ops.stack([gcn_aggregate(H_I, A_hat), H_P], axis=-1)
    z = ops.matmul(features, layer.W)
    if layer.bias is not None:
        z = ops.add(z, layer.bias)
    return _activate(z, layer.activation)


def mlp_head(p: Dict[str, object], head: str, x, depth: int):
    """Shared-weight MLP applied per producer: [T x N_P x width] -> [T x N_P]."""
    h = x
    for layer in range(depth):
        h = ops.tanh(ops.add(ops.matmul(h, p[f"{head}.W{layer}"]), p[f"{head}.b{layer}"]))
    out = ops.add(ops.matmul(h, p[f"{head}.Wout"]), p[f"{head}.bout"])
    shape = ops.shape_of(out)
    return ops.reshape(out, shape[:-1])


def positive(x, scale: float):
    return ops.add(ops.mul(scale, ops.softplus(x)), POSITIVE_FLOOR)


def connectivity_of(p: Dict[str, object]):
    return ops.sigmoid(p["F_raw"])


# --- forward ---

@dataclass(frozen=True)
class ScaledInputs:
    t: np.ndarray  # [T]
    I: np.ndarray  # [T x N_I]
    p_I: np.ndarray  # [T x N_I]


@dataclass
class ForwardOutput:
    q: object
    p_wf: object
    J: object
    V_p: object


def scale_inputs(model: PiGnnModel, panel: TimeSeriesPanel) -> ScaledInputs:
    return ScaledInputs(
        t=model.scalers.t.transform(panel.times)[:, 0],
        I=model.scalers.I.transform(panel.I),
        p_I=model.scalers.p_I.transform(panel.p_I),
    )


def check_scaled_inputs(inputs: ScaledInputs) -> bool:
    lo, hi = SCALED_INPUT_RANGE
    for name in ("t", "I", "p_I"):
        arr = getattr(inputs, name)
        if arr.size and (arr.min() < lo or arr.max() > hi):
            logger.warning("Input '%s' spans [%.3g, %.3g]; expected scaled values within [%g, %g]",
                           name, arr.min(), arr.max(), lo, hi)
            return False
    return True


def _features(model: PiGnnModel, p: Dict[str, object], t, inputs: ScaledInputs):
    n_t = inputs.I.shape[0]
    n_p = model.n_producers
    H_P = ops.broadcast_to(ops.reshape(t, (n_t, 1)), (n_t, n_p))
    A = model.adjacency if model.config.graph_mode == "expert" else connectivity_of(p)
    A_hat = normalize_adjacency(A)

    branches = [gcn_forward(GcnLayer(p["gcn_I.W"], p["gcn_I.b"]), inputs.I, H_P, A_hat, normalized=True)]
    if model.config.use_injector_bhp:
        branches.append(gcn_forward(GcnLayer(p["gcn_pI.W"], p["gcn_pI.b"]), inputs.p_I, H_P, A_hat, normalized=True))
    return branches[0] if len(branches) == 1 else ops.concat(branches, axis=-1)


def _storage_input(model: PiGnnModel, p: Dict[str, object], features):
    """Input of the J and V_p heads: the producer embedding, or the primal GCN features."""
    if model.config.storage == "per_producer":
        return p[STORAGE_EMBED]
    return features.primal if isinstance(features, Dual) else features


def _storage_head(model: PiGnnModel, p: Dict[str, object], head: str, x, scale: float, n_t: int):
    out = positive(mlp_head(p, head, x, model.config.head_depth), scale)
    if model.config.storage == "per_producer":
        # one value per producer, held over every row
        return ops.broadcast_to(ops.reshape(out, (1, model.n_producers)), (n_t, model.n_producers))
    return out


def forward_params(model: PiGnnModel, params, inputs: ScaledInputs, t=None) -> ForwardOutput:
    """
    Forward pass with an explicit parameter vector (array or Variable).

    `t` overrides the scaled time input, e.g. with a Dual carrying a unit
    tangent; q and p_wf then carry time tangents. J and V_p never do: with
    per-producer storage they are constant in time, otherwise they are read
    from the primal features.
    """
    p = model.layout.unpack(params)
    features = _features(model, p, inputs.t if t is None else t, inputs)
    depth = model.config.head_depth
    n_t = inputs.I.shape[0]
    storage_in = _storage_input(model, p, features)
    return ForwardOutput(
        q=mlp_head(p, "q", features, depth),
        p_wf=mlp_head(p, "pwf", features, depth),
        J=_storage_head(model, p, "J", storage_in, model.j_scale, n_t),
        V_p=_storage_head(model, p, "Vp", storage_in, model.vp_scale, n_t),
    )


def forward(model: PiGnnModel, inputs: ScaledInputs) -> ForwardOutput:
    """Scaled q and p_wf plus physical J and V_p, each [T x N_P]."""
    check_scaled_inputs(inputs)
    return forward_params(model, model.params, inputs)


# --- physics and loss ---

def physics_residual(q, p_wf, J, V_p, dq_dt, dpwf_dt, I, F, c_t: float):
    """
    (C_t V_p / J) dq/dt + q + C_t V_p dp_wf/dt - (I F)_j, all in physical units.
    """
    if float(np.min(ops.value(J))) < MIN_J:
        raise ValidationError(f"productivity index below {MIN_J}", field="J", value=float(np.min(ops.value(J))))
    c_vp = ops.mul(c_t, V_p)
    return ops.sub(
        ops.add(ops.add(ops.mul(ops.div(c_vp, J), dq_dt), q), ops.mul(c_vp, dpwf_dt)),
        ops.matmul(I, F),
    )


def lm_mean(x, m: float):
    """mean(|x|^m); m = 2 uses the smooth square."""
    if m == 2:
        return ops.mean(ops.square(x))
    return ops.mean(ops.power(ops.abs(x), m))


@dataclass(frozen=True)
class Batch:
    """Scaled inputs and targets of a row range plus the physical injection rates."""

    inputs: ScaledInputs
    q: np.ndarray
    p_wf: np.ndarray
    I_phys: np.ndarray


def make_batch(model: PiGnnModel, panel: TimeSeriesPanel, rows: range) -> Batch:
    sub = panel.rows(rows)
    return Batch(
        inputs=scale_inputs(model, sub),
        q=model.scalers.q.transform(sub.q),
        p_wf=model.scalers.p_wf.transform(sub.p_wf),
        I_phys=np.asarray(sub.I),
    )


def loss_terms(model: PiGnnModel, params, batch: Batch, config: LossConfig, physics: bool = True) -> Dict[str, object]:
    """Supervised L^m terms in scaled space and, when requested, the physics term."""
    if physics and config.lambda_f > 0:
        out = forward_params(model, params, batch.inputs, t=seed_time(batch.inputs.t))
    else:
        out = forward_params(model, params, batch.inputs)

    q_s = out.q.primal if isinstance(out.q, Dual) else out.q
    pwf_s = out.p_wf.primal if isinstance(out.p_wf, Dual) else out.p_wf
    terms = {
        "q": lm_mean(ops.sub(q_s, batch.q), config.m),
        "pwf": lm_mean(ops.sub(pwf_s, batch.p_wf), config.m),
    }
    if isinstance(out.q, Dual):
        q_range = model.scalers.q.scale_factor
        p_range = model.scalers.p_wf.scale_factor
        t_range = float(model.scalers.t.scale_factor[0]) or 1.0
        q_phys = ops.add(ops.mul(q_s, q_range), model.scalers.q.data_min)
        dq_dt = ops.mul(out.q.tangent_or_zeros(), q_range / t_range)
        dpwf_dt = ops.mul(out.p_wf.tangent_or_zeros(), p_range / t_range)
        pwf_phys = ops.add(ops.mul(pwf_s, p_range), model.scalers.p_wf.data_min)
        residual = physics_residual(
            q_phys, pwf_phys, out.J, out.V_p, dq_dt, dpwf_dt,
            batch.I_phys, connectivity_of(model.layout.unpack(params)), model.c_t,
        )
        scale = config.residual_scale or model.q_norm
        terms["f"] = lm_mean(ops.div(residual, scale), config.m)
    return terms


def total_loss(model: PiGnnModel, params, batch: Batch, config: LossConfig, physics: bool = True):
    """lambda_q L_q + lambda_p L_p + lambda_f L_f; lambda_f = 0 is the physics-free baseline."""
    terms = loss_terms(model, params, batch, config, physics)
    loss = ops.add(ops.mul(config.lambda_q, terms["q"]), ops.mul(config.lambda_p, terms["pwf"]))
    if "f" in terms:
        loss = ops.add(loss, ops.mul(config.lambda_f, terms["f"]))
    return loss


def validation_loss(model: PiGnnModel, params, batch: Batch, config: LossConfig) -> float:
    """Supervised terms only."""
    terms = loss_terms(model, params, batch, config, physics=False)
    return float(ops.value(terms["q"]) + ops.value(terms["pwf"]))


# --- prediction ---

@dataclass(frozen=True)
class Prediction:
    q: np.ndarray
    p_wf: np.ndarray
    J: np.ndarray
    V_p: np.ndarray


def predict(model: PiGnnModel, panel: TimeSeriesPanel) -> Prediction:
    """Unscaled predictions for every panel row."""
    out = forward(model, scale_inputs(model, panel))
    return Prediction(
        q=model.scalers.q.inverse_transform(out.q),
        p_wf=model.scalers.p_wf.inverse_transform(out.p_wf),
        J=np.asarray(out.J),
        V_p=np.asarray(out.V_p),
    )


def ensemble_predict(models: Sequence[PiGnnModel], panel: TimeSeriesPanel) -> np.ndarray:
    """Arithmetic mean of the unscaled rate predictions of every realization."""
    if not models:
        raise ValidationError("ensemble is empty", field="models")
    first = models[0]
    for m in models[1:]:
        if m.layout != first.layout or m.producer_ids != first.producer_ids:
            raise ValidationError("ensemble members differ in architecture", field="models")
    return np.mean([predict(m, panel).q for m in models], axis=0)


def extract_connectivity(model: PiGnnModel) -> ConnectivityMatrix:
    """Trained connectivity sigmoid(F_raw); entries in [0, 1], no row-sum constraint."""
    lo, hi, shape = model.layout.offsets()["F_raw"]
    values = expit(model.params[lo:hi].reshape(shape))
    return ConnectivityMatrix(values=values, injector_ids=model.injector_ids, producer_ids=model.producer_ids)


# --- checkpoints ---

def checkpoint_dict(model: PiGnnModel) -> Dict[str, object]:
    return {
        "architecture": model.config.model_dump(),
        "params": model.params.tolist(),
        "scalers": model.scalers.state(),
        "seed": model.seed,
        "injector_ids": list(model.injector_ids),
        "producer_ids": list(model.producer_ids),
        "adjacency": None if model.adjacency is None else model.adjacency.tolist(),
        "c_t": model.c_t,
        "j_scale": model.j_scale,
        "tau_scale": model.tau_scale,
        "q_norm": model.q_norm,
    }


def model_from_dict(payload: Dict[str, object]) -> PiGnnModel:
    config = ModelConfig(**payload["architecture"])
    injector_ids = tuple(payload["injector_ids"])
    producer_ids = tuple(payload["producer_ids"])
    adjacency = payload.get("adjacency")
    return PiGnnModel(
        config=config,
        layout=build_layout(config, len(injector_ids), len(producer_ids)),
        params=np.asarray(payload["params"], dtype=float),
        scalers=PanelScalers.from_state(payload["scalers"]),
        injector_ids=injector_ids,
        producer_ids=producer_ids,
        adjacency=None if adjacency is None else np.asarray(adjacency, dtype=float),
        c_t=float(payload["c_t"]),
        j_scale=float(payload["j_scale"]),
        tau_scale=float(payload["tau_scale"]),
        q_norm=float(payload["q_norm"]),
        seed=int(payload.get("seed", 0)),
    )


def save_checkpoint(model: PiGnnModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_dict(model), indent=2))
    return path


def load_checkpoint(path) -> PiGnnModel:
    return model_from_dict(json.loads(Path(path).read_text()))
