"""
CRM Service

Producer-based capacitance-resistance model:

    tau_j dq_j/dt + q_j = sum_i F_ij I_i - tau_j J_j dp_wf,j/dt

- crm_forecast: exact superposition solution for stepwise injection and
  piecewise-linear BHP
- integrate_crm_ode: classical RK4 stepped over fine substeps, an oracle
  independent of the superposition solution
- crm_fit: multistart projected-gradient least squares
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..domain import ConnectivityMatrix, CrmParams, DataSplit, TimeSeriesPanel, maybe_ids
from ..utils.error_handling import ErrorCode, NumericalError, ValidationError

logger = logging.getLogger(__name__)

MIN_TRAIN_ROWS = 10
_LOG_TAU_BOUNDS = (math.log(1e-3), math.log(1e5))
_LOG_J_BOUNDS = (math.log(1e-8), math.log(1e4))


# --- inputs ---

def _check_inputs(params: CrmParams, times, I, p_wf, q0) -> Tuple[np.ndarray, ...]:
    times = np.asarray(times, dtype=float)
    I = np.atleast_2d(np.asarray(I, dtype=float))
    p_wf = np.atleast_2d(np.asarray(p_wf, dtype=float))
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    n_t = times.shape[0]
    n_i, n_p = params.F.values.shape
    if np.any(params.tau <= 0):
        raise ValidationError("tau must be > 0", field="tau", value=params.tau.tolist())
    expected = {"I": (I, (n_t, n_i)), "p_wf": (p_wf, (n_t, n_p)), "q0": (q0, (n_p,))}
    for name, (arr, shape) in expected.items():
        if arr.shape != shape:
            raise ValidationError(
                f"{name} has shape {arr.shape}, expected {shape}", field=name, code=ErrorCode.SHAPE_MISMATCH
            )
    dt = np.diff(times)
    if np.any(dt <= 0):
        k = int(np.argmax(dt <= 0)) + 1
        raise ValidationError(f"time step {k} is not positive", field="times", value=k)
    return times, I, p_wf, q0


def _forcing(params: CrmParams, I: np.ndarray, p_wf: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Per-interval constant forcing F.I^(k) - tau J dp_wf^(k)/dt_k, shape [N_T - 1 x N_P]."""
    slope = np.diff(p_wf, axis=0) / np.diff(times)[:, None]
    return I[1:] @ params.F.values - params.tau * params.J * slope


# --- forecasting ---

def crm_forecast(params: CrmParams, times, I, p_wf, q0) -> np.ndarray:
    """
    Exact solution for stepwise injection and linear BHP within each interval.

    Row k of I is the rate held over (t_{k-1}, t_k]; row 0 of the result is q0.
    """
    times, I, p_wf, q0 = _check_inputs(params, times, I, p_wf, q0)
    forcing = _forcing(params, I, p_wf, times)
    decay = np.exp(-np.diff(times)[:, None] / params.tau)

    q = np.empty((times.shape[0], q0.shape[0]))
    q[0] = q0
    for k in range(1, times.shape[0]):
        q[k] = decay[k - 1] * q[k - 1] + (1.0 - decay[k - 1]) * forcing[k - 1]
    return q


def crm_rhs(params: CrmParams, q: np.ndarray, injection: np.ndarray, bhp_slope: np.ndarray) -> np.ndarray:
    """dq/dt = (sum_i F_ij I_i - q_j - tau_j J_j dp_wf,j/dt) / tau_j at one instant."""
    supply = injection @ params.F.values
    return (supply - q - params.tau * params.J * bhp_slope) / params.tau


def rk4_step(params: CrmParams, q: np.ndarray, h: float, injection: np.ndarray, bhp_slope: np.ndarray) -> np.ndarray:
    k1 = crm_rhs(params, q, injection, bhp_slope)
    k2 = crm_rhs(params, q + 0.5 * h * k1, injection, bhp_slope)
    k3 = crm_rhs(params, q + 0.5 * h * k2, injection, bhp_slope)
    k4 = crm_rhs(params, q + h * k3, injection, bhp_slope)
    return q + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def integrate_crm_ode(params: CrmParams, times, I, p_wf, q0, substep: float = 1e-3) -> np.ndarray:
    """
    Classical RK4 stepped explicitly over ceil(dt / substep) equal substeps per interval.

    Over (t_{k-1}, t_k] the injection is row k of I and p_wf moves linearly
    from row k-1 to row k, so every stage sees that row and that slope.
    """
    if substep <= 0:
        raise ValidationError("substep must be > 0", field="substep", value=substep)
    times, I, p_wf, q0 = _check_inputs(params, times, I, p_wf, q0)

    q = np.empty((times.shape[0], q0.shape[0]))
    q[0] = q0
    for k in range(1, times.shape[0]):
        dt = times[k] - times[k - 1]
        m = max(1, int(math.ceil(dt / substep - 1e-12)))
        h = dt / m
        bhp_slope = (p_wf[k] - p_wf[k - 1]) / dt
        state = q[k - 1].copy()
        for _ in range(m):
            state = rk4_step(params, state, h, I[k], bhp_slope)
        q[k] = state
    return q


def forecast_panel(params: CrmParams, panel: TimeSeriesPanel, split: DataSplit) -> np.ndarray:
    """
    CRM prediction for every panel row.

    Training rows start from the first observed rate; later rows restart from
    the last observed training rate.
    """
    q_hat = np.zeros_like(panel.q)
    train = panel.rows(split.train)
    q_hat[split.train.start:split.train.stop] = crm_forecast(params, train.times, train.I, train.p_wf, train.q[0])
    last = split.train.stop - 1
    tail = panel.rows(range(last, panel.n_rows))
    q_hat[last:] = crm_forecast(params, tail.times, tail.I, tail.p_wf, panel.q[last])
    return q_hat


# --- fitting ---

def project_connectivity_rows(F: np.ndarray) -> np.ndarray:
    """
    Euclidean projection of each injector row onto {0 <= F_ij <= 1, sum_j F_ij <= 1}.

    Rows whose clipped sum exceeds 1 are projected onto the probability simplex.
    """
    F = np.clip(np.asarray(F, dtype=float), 0.0, 1.0)
    out = F.copy()
    for i, row in enumerate(F):
        if row.sum() <= 1.0:
            continue
        u = np.sort(row)[::-1]
        css = np.cumsum(u)
        ks = np.arange(1, u.size + 1)
        rho = int(np.nonzero(u - (css - 1.0) / ks > 0)[0][-1])
        theta = (css[rho] - 1.0) / (rho + 1)
        out[i] = np.maximum(row - theta, 0.0)
    return out


@dataclass
class _Problem:
    times: np.ndarray
    I: np.ndarray
    p_wf: np.ndarray
    q_obs: np.ndarray
    n_i: int
    n_p: int

    def unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n_p = self.n_p
        return np.exp(x[:n_p]), np.exp(x[n_p:2 * n_p]), x[2 * n_p:].reshape(self.n_i, self.n_p)

    def pack(self, tau: np.ndarray, J: np.ndarray, F: np.ndarray) -> np.ndarray:
        return np.concatenate([np.log(tau), np.log(J), F.ravel()])

    def project(self, x: np.ndarray) -> np.ndarray:
        n_p = self.n_p
        out = x.copy()
        out[:n_p] = np.clip(out[:n_p], *_LOG_TAU_BOUNDS)
        out[n_p:2 * n_p] = np.clip(out[n_p:2 * n_p], *_LOG_J_BOUNDS)
        out[2 * n_p:] = project_connectivity_rows(out[2 * n_p:].reshape(self.n_i, n_p)).ravel()
        return out


def crm_objective(problem: _Problem, x: np.ndarray, with_gradient: bool = True) -> Tuple[float, Optional[np.ndarray]]:
    """
    Sum of squared rate errors over the training rows and its gradient.

    The gradient comes from forward sensitivities of the forecast recursion
    with respect to log tau, log J and F.
    """
    tau, J, F = problem.unpack(x)
    dt = np.diff(problem.times)[:, None]
    slope = np.diff(problem.p_wf, axis=0) / dt
    u = problem.I[1:] @ F
    a = np.exp(-dt / tau)

    q = problem.q_obs[0].copy()
    sse = 0.0
    if with_gradient:
        s_tau = np.zeros(problem.n_p)
        s_j = np.zeros(problem.n_p)
        s_f = np.zeros((problem.n_i, problem.n_p))
        g_tau = np.zeros(problem.n_p)
        g_j = np.zeros(problem.n_p)
        g_f = np.zeros((problem.n_i, problem.n_p))

    for k in range(dt.shape[0]):
        ak = a[k]
        forcing = u[k] - tau * J * slope[k]
        if with_gradient:
            da = ak * dt[k] / (tau * tau)
            s_tau = ak * s_tau + da * (q - forcing) - (1.0 - ak) * J * slope[k]
            s_j = ak * s_j - (1.0 - ak) * tau * slope[k]
            s_f = ak * s_f + (1.0 - ak) * problem.I[k + 1][:, None]
        q = ak * q + (1.0 - ak) * forcing
        r = problem.q_obs[k + 1] - q
        sse += float(np.sum(r * r))
        if with_gradient:
            g_tau -= 2.0 * r * s_tau
            g_j -= 2.0 * r * s_j
            g_f -= 2.0 * r[None, :] * s_f

    if not with_gradient:
        return sse, None
    gradient = np.concatenate([g_tau * tau, g_j * J, g_f.ravel()])
    return sse, gradient


@dataclass
class RestartResult:
    objective: float
    iterations: int
    converged: bool
    status: str
    x: Optional[np.ndarray] = None

    def summary(self) -> Dict[str, Any]:
        return {
            "objective": float(self.objective) if np.isfinite(self.objective) else None,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "status": self.status,
        }


def _projected_gradient(problem: _Problem, x0: np.ndarray, max_iter: int, tol: float) -> RestartResult:
    """Spectral projected gradient with monotone Armijo backtracking."""
    x = problem.project(x0)
    f, g = crm_objective(problem, x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return RestartResult(float("nan"), 0, False, "non-finite objective")

    step = 1.0 / max(float(np.max(np.abs(g))), 1e-12)
    x_prev = g_prev = None
    for it in range(1, max_iter + 1):
        if x_prev is not None:
            sx, sg = x - x_prev, g - g_prev
            curvature = float(sx @ sg)
            if curvature > 0:
                step = float(np.clip((sx @ sx) / curvature, 1e-12, 1e12))

        direction = problem.project(x - step * g) - x
        if float(np.max(np.abs(direction))) < tol:
            return RestartResult(f, it, True, "stationary", x)
        slope = float(g @ direction)

        lam = 1.0
        while True:
            trial = x + lam * direction
            f_trial, _ = crm_objective(problem, trial, with_gradient=False)
            if np.isfinite(f_trial) and f_trial <= f + 1e-4 * lam * slope:
                break
            lam *= 0.5
            if lam < 1e-12:
                return RestartResult(f, it, True, "line search exhausted", x)

        f_new, g_new = crm_objective(problem, trial)
        if not np.isfinite(f_new) or not np.all(np.isfinite(g_new)):
            return RestartResult(float("nan"), it, False, "non-finite objective")
        x_prev, g_prev = x, g
        x, g = trial, g_new
        decrease = f - f_new
        f = f_new
        if decrease <= 1e-14 * max(1.0, abs(f)):
            return RestartResult(f, it, True, "objective converged", x)

    return RestartResult(f, max_iter, False, "max iterations", x)


def _initial_guess(problem: _Problem, rng: np.random.Generator, first: bool) -> np.ndarray:
    span = float(problem.times[-1] - problem.times[0])
    dt_mean = span / max(1, problem.times.shape[0] - 1)
    if first:
        tau = np.full(problem.n_p, max(dt_mean, 0.1 * span))
        J = np.ones(problem.n_p)
        F = np.full((problem.n_i, problem.n_p), 1.0 / problem.n_p)
    else:
        tau = np.exp(rng.uniform(math.log(max(dt_mean, 1e-3)), math.log(max(span, 2 * dt_mean)), problem.n_p))
        J = np.exp(rng.uniform(math.log(1e-2), math.log(10.0), problem.n_p))
        F = rng.dirichlet(np.ones(problem.n_p), size=problem.n_i) * rng.uniform(0.5, 1.0, size=(problem.n_i, 1))
    return problem.pack(tau, J, F)


@dataclass(frozen=True)
class CrmFitResult:
    params: CrmParams
    diagnostics: Dict[str, Any] = field(default_factory=dict)


def crm_fit_with_diagnostics(
    panel: TimeSeriesPanel,
    split: DataSplit,
    c_t: float,
    multistarts: int = 8,
    seed: int = 0,
    max_iter: int = 2000,
    tol: float = 1e-10,
) -> CrmFitResult:
    if len(split.train) < MIN_TRAIN_ROWS:
        raise ValidationError(
            f"CRM fitting needs at least {MIN_TRAIN_ROWS} training rows, got {len(split.train)}", field="split"
        )
    if multistarts < 1:
        raise ValidationError("multistarts must be >= 1", field="multistarts", value=multistarts)
    train = panel.rows(split.train)
    problem = _Problem(train.times, train.I, train.p_wf, train.q, panel.n_injectors, panel.n_producers)
    rng = np.random.default_rng(seed)

    started = time.perf_counter()
    restarts: List[RestartResult] = []
    for r in range(multistarts):
        result = _projected_gradient(problem, _initial_guess(problem, rng, first=(r == 0)), max_iter, tol)
        logger.debug("CRM restart %d: objective=%s iterations=%d status=%s", r, result.objective,
                     result.iterations, result.status)
        restarts.append(result)

    usable = [(k, res) for k, res in enumerate(restarts) if res.x is not None and np.isfinite(res.objective)]
    if not usable:
        raise NumericalError(
            f"all {multistarts} CRM restarts failed",
            code=ErrorCode.OPTIMIZER_ERROR,
            context={"restarts": [res.summary() for res in restarts]},
        )
    best_k, best = min(usable, key=lambda item: (item[1].objective, item[0]))
    tau, J, F = problem.unpack(best.x)
    F = project_connectivity_rows(F)
    params = CrmParams(
        tau=tau,
        J=J,
        F=ConnectivityMatrix(values=F, injector_ids=panel.injector_ids, producer_ids=panel.producer_ids),
    )
    diagnostics = {
        "objective": float(best.objective),
        "best_restart": best_k,
        "restarts": [res.summary() for res in restarts],
        "pore_volume": params.pore_volume(c_t).tolist(),
        "c_t": c_t,
        "wall_time_s": time.perf_counter() - started,
    }
    logger.info("CRM fit: best restart %d objective %.6g in %.2fs", best_k, best.objective,
                diagnostics["wall_time_s"])
    return CrmFitResult(params=params, diagnostics=diagnostics)


def crm_fit(panel: TimeSeriesPanel, split: DataSplit, c_t: float, multistarts: int = 8, seed: int = 0) -> CrmParams:
    """Least-squares CRM parameters over the training rows (best of `multistarts` restarts)."""
    return crm_fit_with_diagnostics(panel, split, c_t, multistarts=multistarts, seed=seed).params


def make_params(tau, J, F, injector_ids=None, producer_ids=None) -> CrmParams:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    return CrmParams(
        tau=np.asarray(tau, dtype=float),
        J=np.asarray(J, dtype=float),
        F=ConnectivityMatrix(
            values=F,
            injector_ids=maybe_ids("INJ", F.shape[0], injector_ids),
            producer_ids=maybe_ids("PRD", F.shape[1], producer_ids),
        ),
    )


def params_to_dict(params: CrmParams) -> Dict[str, Any]:
    return {
        "injector_ids": list(params.F.injector_ids),
        "producer_ids": list(params.F.producer_ids),
        "tau": params.tau.tolist(),
        "J": params.J.tolist(),
        "F": params.F.values.tolist(),
    }


def params_from_dict(payload: Dict[str, Any]) -> CrmParams:
    return make_params(payload["tau"], payload["J"], payload["F"], payload.get("injector_ids"),
                       payload.get("producer_ids"))
