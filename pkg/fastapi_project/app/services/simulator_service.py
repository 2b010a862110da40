"""
Simulator Service

Single-phase slightly-compressible flow on a 2-D Cartesian grid, fully
implicit in time, two-point flux finite volumes in space, closed boundaries.

    PV c_t (p^{n+1} - p^n) / dt = sum_faces T (p_nb - p) + I - WI (p - p_wf)^+

Field units: psi, bbl/day, mD, cP, ft. Injectors are rate sources, producers
are BHP-controlled with a Peaceman well index; a producer whose cell pressure
falls below its BHP target is shut in (rate floored at 0).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..domain import ReservoirGrid, TimeSeriesPanel
from ..schemas import FluidProps, ScheduleConfig, SimulationConfig, WellNetwork
from ..utils.error_handling import ConvergenceError, ErrorCode, ValidationError

logger = logging.getLogger(__name__)

DARCY_FACTOR = 0.001127  # (bbl/day) / (mD ft psi / cP)
FT3_PER_BBL = 5.615
PEACEMAN_RADIUS_FACTOR = 0.2

Cell = Tuple[int, int]


@dataclass(frozen=True)
class SimulatorState:
    """Cell pressures [ny x nx] (psi) and the well indices (bbl/day/psi) of the wells they feed."""

    pressure: np.ndarray
    well_indices: Dict[str, float] = field(default_factory=dict)
    fluid: FluidProps = field(default_factory=FluidProps)

    def __post_init__(self):
        pressure = np.array(self.pressure, dtype=float, copy=True)
        pressure.setflags(write=False)
        object.__setattr__(self, "pressure", pressure)
        if not np.all(np.isfinite(pressure)):
            raise ValidationError("pressures must be finite", field="pressure", code=ErrorCode.NON_FINITE_INPUT)
        bad = [w for w, wi in self.well_indices.items() if not wi > 0]
        if bad:
            raise ValidationError(f"well index must be > 0 for {bad}", field="well_indices")


@dataclass
class SimulationResult:
    """Per-step outputs at the end of each time step (row k covers (t_{k-1}, t_k])."""

    times: np.ndarray
    I: np.ndarray
    p_I: np.ndarray
    q: np.ndarray
    p_wf: np.ndarray
    mean_pressure: np.ndarray
    initial_mean_pressure: float
    final_state: SimulatorState
    pressures: Optional[np.ndarray] = None
    shut_in_steps: int = 0

    def to_panel(self, injector_ids: Sequence[str], producer_ids: Sequence[str]) -> TimeSeriesPanel:
        return TimeSeriesPanel(
            times=self.times,
            I=self.I,
            p_I=self.p_I,
            q=self.q,
            p_wf=self.p_wf,
            injector_ids=injector_ids,
            producer_ids=producer_ids,
        )


def _harmonic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * a * b / (a + b)


def pore_volume(grid: ReservoirGrid, thickness: float) -> np.ndarray:
    """Cell pore volumes [ny x nx] in bbl."""
    return grid.dx * grid.dy * thickness * grid.phi / FT3_PER_BBL


def peaceman_well_index(grid: ReservoirGrid, cell: Cell, config: SimulationConfig) -> float:
    r_e = PEACEMAN_RADIUS_FACTOR * grid.dx
    if r_e <= config.well_radius:
        raise ValidationError(
            f"equivalent radius {r_e} ft does not exceed the well radius {config.well_radius} ft",
            field="well_radius",
            value=config.well_radius,
        )
    k = grid.perm[cell]
    return float(DARCY_FACTOR * 2.0 * np.pi * k * config.thickness / (grid.fluid.mu * np.log(r_e / config.well_radius)))


def transmissibility_matrix(grid: ReservoirGrid, thickness: float) -> sp.csr_matrix:
    """Graph Laplacian of face transmissibilities (bbl/day/psi), harmonic-mean permeability across faces."""
    ny, nx = grid.ny, grid.nx
    idx = np.arange(nx * ny).reshape(ny, nx)
    mu = grid.fluid.mu

    tx = DARCY_FACTOR * _harmonic(grid.perm[:, :-1], grid.perm[:, 1:]) * grid.dy * thickness / (mu * grid.dx)
    ty = DARCY_FACTOR * _harmonic(grid.perm[:-1, :], grid.perm[1:, :]) * grid.dx * thickness / (mu * grid.dy)

    i = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    j = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    t = np.concatenate([tx.ravel(), ty.ravel()])

    n = nx * ny
    off = sp.coo_matrix((-t, (i, j)), shape=(n, n))
    diag = np.zeros(n)
    np.add.at(diag, i, t)
    np.add.at(diag, j, t)
    return (off + off.T + sp.diags(diag)).tocsr()


class DiffusivitySimulator:
    """
    Implicit single-phase simulator for one grid.

    Factorizations are cached per (time step, open producer set) so a run
    with a constant step and a settled active set factorizes once.
    """

    def __init__(self, grid: ReservoirGrid, config: SimulationConfig = None):
        self.grid = grid
        self.config = config or SimulationConfig()
        self.pv = pore_volume(grid, self.config.thickness).ravel()
        self.laplacian = transmissibility_matrix(grid, self.config.thickness)
        self._factors: Dict[Tuple[float, FrozenSet[int]], object] = {}

    def flat(self, cell: Cell) -> int:
        row, col = cell
        return int(row) * self.grid.nx + int(col)

    def initial_state(self, well_indices: Optional[Dict[str, float]] = None) -> SimulatorState:
        pressure = np.full((self.grid.ny, self.grid.nx), self.config.initial_pressure)
        return SimulatorState(pressure=pressure, well_indices=well_indices or {}, fluid=self.grid.fluid)

    def mean_pressure(self, pressure: np.ndarray) -> float:
        """Pore-volume weighted average pressure."""
        return float(np.dot(self.pv, np.ravel(pressure)) / self.pv.sum())

    def _factor(self, dt: float, cells: np.ndarray, wi: np.ndarray, open_set: FrozenSet[int]):
        key = (dt, open_set)
        if key not in self._factors:
            extra = np.zeros(self.pv.shape[0])
            for j in open_set:
                extra[cells[j]] += wi[j]
            system = self.laplacian + sp.diags(self.pv * self.grid.fluid.c_t / dt + extra)
            self._factors[key] = splu(system.tocsc())
        return self._factors[key]

    def run(
        self,
        injector_cells: Sequence[Cell],
        injector_rates,
        producer_cells: Sequence[Cell],
        producer_bhp,
        dt: float,
        n_steps: int,
        store_pressures: bool = False,
        producer_ids: Optional[Sequence[str]] = None,
    ) -> SimulationResult:
        """
        Advance `n_steps` steps of length `dt` from the uniform initial pressure.

        `injector_rates` is [n_steps x N_I] (rate held over each step);
        `producer_bhp` is [N_P] or [n_steps x N_P].
        """
        if dt <= 0 or n_steps < 1:
            raise ValidationError("need dt > 0 and at least one step", field="dt", value=dt)
        n_inj, n_prod = len(injector_cells), len(producer_cells)
        rates = np.asarray(injector_rates, dtype=float).reshape(n_steps, n_inj)
        bhp = np.broadcast_to(np.atleast_2d(np.asarray(producer_bhp, dtype=float)), (n_steps, n_prod))
        if np.any(rates < 0):
            raise ValidationError("injection rates must be >= 0", field="injection")

        inj = np.array([self.flat(c) for c in injector_cells], dtype=int)
        prod = np.array([self.flat(c) for c in producer_cells], dtype=int)
        wi = np.array([peaceman_well_index(self.grid, c, self.config) for c in producer_cells])
        accumulation = self.pv * self.grid.fluid.c_t / dt

        p = np.array(self.initial_state().pressure).ravel()
        initial_mean = self.mean_pressure(p)
        open_set = frozenset(range(n_prod))

        out_q = np.zeros((n_steps, n_prod))
        out_pI = np.zeros((n_steps, n_inj))
        mean_p = np.zeros(n_steps)
        pressures = np.zeros((n_steps, self.grid.ny, self.grid.nx)) if store_pressures else None
        shut_in_steps = 0

        for step in range(n_steps):
            base = accumulation * p
            np.add.at(base, inj, rates[step])
            for _ in range(self.config.max_active_set_iterations):
                rhs = base.copy()
                for j in open_set:
                    rhs[prod[j]] += wi[j] * bhp[step, j]
                try:
                    p_new = self._factor(dt, prod, wi, open_set).solve(rhs)
                except RuntimeError as exc:
                    raise ConvergenceError(f"linear solve failed at step {step}: {exc}", step=step) from exc
                if not np.all(np.isfinite(p_new)):
                    raise ConvergenceError(f"non-finite pressure at step {step}", step=step)
                wanted = frozenset(j for j in range(n_prod) if p_new[prod[j]] > bhp[step, j])
                if wanted == open_set:
                    break
                logger.debug("step %d: open producers %s -> %s", step, sorted(open_set), sorted(wanted))
                open_set = wanted
            else:
                raise ConvergenceError(f"producer controls did not settle at step {step}", step=step)

            if len(open_set) < n_prod:
                shut_in_steps += 1
            p = p_new
            for j in open_set:
                out_q[step, j] = wi[j] * (p[prod[j]] - bhp[step, j])
            out_pI[step] = p[inj]
            mean_p[step] = self.mean_pressure(p)
            if pressures is not None:
                pressures[step] = p.reshape(self.grid.ny, self.grid.nx)

        if shut_in_steps:
            logger.info("Producers were shut in on %d of %d steps", shut_in_steps, n_steps)
        final = SimulatorState(
            pressure=p.reshape(self.grid.ny, self.grid.nx),
            well_indices={name: float(w) for name, w in zip(producer_ids or [f"P{j + 1}" for j in range(n_prod)], wi)},
            fluid=self.grid.fluid,
        )
        return SimulationResult(
            times=dt * np.arange(1, n_steps + 1),
            I=rates.copy(),
            p_I=out_pI,
            q=out_q,
            p_wf=np.array(bhp),
            mean_pressure=mean_p,
            initial_mean_pressure=initial_mean,
            final_state=final,
            pressures=pressures,
            shut_in_steps=shut_in_steps,
        )


def schedule_rates(schedule: ScheduleConfig, times: np.ndarray) -> np.ndarray:
    """
    Injection matrix [len(times) x N_I]: row k holds the rate over (t_{k-1}, t_k],
    i.e. the last schedule step starting at or before t_{k-1}.
    """
    times = np.asarray(times, dtype=float)
    starts = np.concatenate([[0.0], times[:-1]])
    rates = np.zeros((times.shape[0], len(schedule.injection)))
    for i, steps in enumerate(schedule.injection):
        ordered = sorted(steps)
        for start, rate in ordered:
            rates[starts >= start - 1e-9, i] = rate
        # before the first declared step the injector is idle
        rates[starts < ordered[0][0] - 1e-9, i] = 0.0
    return rates


def producer_targets(schedule: ScheduleConfig, n_producers: int) -> np.ndarray:
    bhp = np.asarray(schedule.producer_bhp, dtype=float)
    if bhp.shape[0] == 1:
        return np.full(n_producers, bhp[0])
    if bhp.shape[0] != n_producers:
        raise ValidationError(
            f"schedule has {bhp.shape[0]} BHP targets for {n_producers} producers",
            field="producer_bhp",
            code=ErrorCode.SHAPE_MISMATCH,
        )
    return bhp


def run_schedule(
    grid: ReservoirGrid,
    wells: WellNetwork,
    schedule: ScheduleConfig,
    config: SimulationConfig = None,
    store_pressures: bool = False,
) -> SimulationResult:
    grid.check_wells(wells)
    if len(schedule.injection) != wells.n_injectors:
        raise ValidationError(
            f"schedule covers {len(schedule.injection)} injectors, network has {wells.n_injectors}",
            field="injection",
            code=ErrorCode.SHAPE_MISMATCH,
        )
    simulator = DiffusivitySimulator(grid, config)
    times = schedule.step * np.arange(1, schedule.n_steps + 1)
    result = simulator.run(
        injector_cells=[grid.cell_of(w.x, w.y) for w in wells.injectors],
        injector_rates=schedule_rates(schedule, times),
        producer_cells=[grid.cell_of(w.x, w.y) for w in wells.producers],
        producer_bhp=producer_targets(schedule, wells.n_producers),
        dt=schedule.step,
        n_steps=schedule.n_steps,
        store_pressures=store_pressures,
        producer_ids=wells.producer_ids,
    )
    logger.info(
        "Simulated %d steps: mean pressure %.1f -> %.1f psi",
        schedule.n_steps, result.initial_mean_pressure, result.mean_pressure[-1],
    )
    return result


def simulate_diffusivity(
    grid: ReservoirGrid, wells: WellNetwork, schedule: ScheduleConfig, config: SimulationConfig = None
) -> TimeSeriesPanel:
    """Panel of I, p_I (injector cell pressure), q and p_wf at the end of every schedule step."""
    result = run_schedule(grid, wells, schedule, config)
    return result.to_panel(wells.injector_ids, wells.producer_ids)


def cumulative_balance(result: SimulationResult, pv_total: float, c_t: float) -> Dict[str, List[float]]:
    """Per-step net withdrawal next to the compressibility-weighted pore-volume pressure drop (both bbl)."""
    dt = np.diff(np.concatenate([[0.0], result.times]))
    withdrawn = (result.q.sum(axis=1) - result.I.sum(axis=1)) * dt
    previous = np.concatenate([[result.initial_mean_pressure], result.mean_pressure[:-1]])
    expansion = c_t * pv_total * (previous - result.mean_pressure)
    return {"withdrawn": withdrawn.tolist(), "expansion": expansion.tolist()}
