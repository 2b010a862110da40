"""
Synth Service

Synthetic truth generation:
- gen_channel_field: sinusoidal high-permeability channels over a low-permeability bank
- generate_crm_world: panels that follow the CRM ODE exactly (superposition solution)
- make_cases / write_case: randomized well placements and their on-disk case layout
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..domain import AdjacencyMatrix, CrmParams, ReservoirGrid, TimeSeriesPanel
from ..importers.grid_importer import write_grid_dir
from ..importers.panel_importer import write_panel_csv
from ..importers.well_importer import write_wells_csv
from ..schemas import ChannelFieldConfig, FluidProps, ScheduleConfig, SimulationConfig, Well, WellNetwork
from ..utils.error_handling import AppError, ErrorCode, ValidationError
from .crm_service import crm_forecast, make_params
from .simulator_service import producer_targets, schedule_rates, simulate_diffusivity

logger = logging.getLogger(__name__)

CENTER_JITTER = 0.1  # fraction of the channel spacing
MAX_PLACEMENT_ATTEMPTS = 1000


def gen_channel_field(config: ChannelFieldConfig) -> ReservoirGrid:
    """
    Channels run along x. Channel c is centred at (c + 0.5) * H / count (plus a
    small seeded jitter) and meanders as amplitude * sin(2 pi x / wavelength + phase).
    """
    height = config.ny * config.dy
    if config.channel_width >= height:
        raise ValidationError(
            f"channel width {config.channel_width} must be below the domain height {height}",
            field="channel_width",
            value=config.channel_width,
        )
    rng = np.random.default_rng(config.seed)
    spacing = height / config.channel_count
    x = (np.arange(config.nx) + 0.5) * config.dx
    y = (np.arange(config.ny) + 0.5) * config.dy
    X, Y = np.meshgrid(x, y)

    in_channel = np.zeros((config.ny, config.nx), dtype=bool)
    for c in range(config.channel_count):
        center = (c + 0.5) * spacing + rng.uniform(-CENTER_JITTER, CENTER_JITTER) * spacing
        phase = rng.uniform(0.0, 2.0 * np.pi)
        centerline = center + config.amplitude * np.sin(2.0 * np.pi * X / config.wavelength + phase)
        in_channel |= np.abs(Y - centerline) <= 0.5 * config.channel_width

    perm = np.where(in_channel, config.k_net, config.k_bank)
    logger.debug("Channel field: %.1f%% net cells", 100.0 * in_channel.mean())
    return ReservoirGrid(
        nx=config.nx,
        ny=config.ny,
        dx=config.dx,
        dy=config.dy,
        perm=perm,
        phi=np.full((config.ny, config.nx), config.phi_const),
        fluid=FluidProps(c_t=config.ct_per_psi, mu=config.mu_cp),
    )


def generate_crm_world(
    params: CrmParams,
    schedule: ScheduleConfig,
    q0,
    noise: float = 0.0,
    seed: int = 0,
    p_wf=None,
    initial_pressure: float = 3000.0,
) -> TimeSeriesPanel:
    """
    Panel on t_k = k * step (k = 0..N) whose rates solve the CRM ODE under the schedule.

    `p_wf` overrides the schedule's constant BHP targets with a [N+1 x N_P]
    piecewise-linear history. With `noise` > 0, Gaussian noise of standard
    deviation noise * mean(q) is added and rates are clipped at 0.
    """
    if noise < 0:
        raise ValidationError("noise must be >= 0", field="noise", value=noise)
    n_p = params.n_producers
    times = schedule.step * np.arange(schedule.n_steps + 1)
    I = schedule_rates(schedule, times)
    if I.shape[1] != params.F.values.shape[0]:
        raise ValidationError(
            f"schedule covers {I.shape[1]} injectors, connectivity has {params.F.values.shape[0]}",
            field="injection",
            code=ErrorCode.SHAPE_MISMATCH,
        )
    if p_wf is None:
        p_wf = np.tile(producer_targets(schedule, n_p), (times.shape[0], 1))
    p_wf = np.asarray(p_wf, dtype=float)

    q = crm_forecast(params, times, I, p_wf, q0)
    if noise > 0:
        rng = np.random.default_rng(seed)
        q = np.clip(q + rng.normal(0.0, noise * float(np.mean(q)), size=q.shape), 0.0, None)
    return TimeSeriesPanel(
        times=times,
        I=I,
        p_I=np.full_like(I, initial_pressure),
        q=q,
        p_wf=p_wf,
        injector_ids=params.F.injector_ids,
        producer_ids=params.F.producer_ids,
    )


@dataclass(frozen=True)
class SynthCase:
    name: str
    grid: ReservoirGrid
    wells: WellNetwork
    schedule: ScheduleConfig


def _place_wells(grid: ReservoirGrid, n_wells: int, min_spacing: float, rng: np.random.Generator) -> List[tuple]:
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        flat = rng.choice(grid.nx * grid.ny, size=n_wells, replace=False)
        rows, cols = np.divmod(flat, grid.nx)
        gaps = np.hypot(rows[:, None] - rows[None, :], cols[:, None] - cols[None, :])
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() >= min_spacing:
            return list(zip(rows.tolist(), cols.tolist()))
    raise AppError(
        message=f"could not place {n_wells} wells {min_spacing} cells apart after {MAX_PLACEMENT_ATTEMPTS} attempts",
        code=ErrorCode.PLACEMENT_ERROR,
        context={"n_wells": n_wells, "min_spacing": min_spacing},
        status_code=422,
    )


def make_cases(
    grid_config: ChannelFieldConfig,
    case_count: int,
    seed: int,
    schedule: Optional[ScheduleConfig] = None,
    n_injectors: int = 2,
    n_producers: int = 4,
    min_spacing: float = 5.0,
) -> List[SynthCase]:
    """
    Cases share one channel field, schedule and producer controls; wells sit at
    random cell centres drawn from `seed`, at least `min_spacing` cells apart.
    """
    if case_count < 1:
        raise ValidationError("case count must be >= 1", field="case_count", value=case_count)
    schedule = schedule or ScheduleConfig()
    grid = gen_channel_field(grid_config)
    rng = np.random.default_rng(seed)

    cases = []
    for c in range(case_count):
        cells = _place_wells(grid, n_injectors + n_producers, min_spacing, rng)
        located = [grid.cell_center(r, col) for r, col in cells]
        wells = WellNetwork(
            injectors=[Well(id=f"INJ{i + 1}", x=x, y=y) for i, (x, y) in enumerate(located[:n_injectors])],
            producers=[Well(id=f"PRD{j + 1}", x=x, y=y) for j, (x, y) in enumerate(located[n_injectors:])],
        )
        cases.append(SynthCase(name=f"case{c + 1}", grid=grid, wells=wells, schedule=schedule))
    logger.info("Generated %d cases with %d injectors and %d producers", case_count, n_injectors, n_producers)
    return cases


def simulate_case(case: SynthCase, config: SimulationConfig = None) -> TimeSeriesPanel:
    return simulate_diffusivity(case.grid, case.wells, case.schedule, config)


def write_case(case: SynthCase, out_dir: Union[str, Path], panel: Optional[TimeSeriesPanel] = None) -> Path:
    """Write grid/, wells.csv, schedule.json and (when given) panel.csv under out_dir/<case name>."""
    d = Path(out_dir) / case.name
    d.mkdir(parents=True, exist_ok=True)
    write_grid_dir(case.grid, d / "grid")
    write_wells_csv(case.wells, d / "wells.csv")
    (d / "schedule.json").write_text(json.dumps(case.schedule.model_dump(), indent=2))
    if panel is not None:
        write_panel_csv(panel, d / "panel.csv")
    return d


def write_cases(
    cases: Sequence[SynthCase], out_dir: Union[str, Path], config: SimulationConfig = None
) -> List[Path]:
    """Simulate and write every case."""
    written = []
    for case in cases:
        panel = simulate_case(case, config)
        written.append(write_case(case, out_dir, panel))
        logger.info("Wrote %s (%d rows)", case.name, panel.n_rows)
    return written


def crm_world_adjacency(params: CrmParams, threshold: float = 0.05) -> AdjacencyMatrix:
    """Expert prior for a CRM world: pairs whose generating f_ij exceeds `threshold` (at least the strongest per injector)."""
    F = params.F.values
    A = (F > threshold).astype(int)
    A[np.arange(F.shape[0]), np.argmax(F, axis=1)] = 1
    return AdjacencyMatrix(values=A, injector_ids=params.F.injector_ids, producer_ids=params.F.producer_ids)


def random_crm_params(n_injectors: int, n_producers: int, seed: int = 0) -> CrmParams:
    """tau in [20, 200] days, J in [0.5, 5] bbl/day/psi, F rows drawn from a Dirichlet and scaled to sum in [0.8, 1]."""
    rng = np.random.default_rng(seed)
    F = rng.dirichlet(np.ones(n_producers), size=n_injectors) * rng.uniform(0.8, 1.0, size=(n_injectors, 1))
    return make_params(
        tau=rng.uniform(20.0, 200.0, size=n_producers),
        J=rng.uniform(0.5, 5.0, size=n_producers),
        F=F,
    )


def random_schedule(n_injectors: int, n_rows: int, step: float = 10.0, seed: int = 0) -> ScheduleConfig:
    """Three abrupt rate regimes per injector over a horizon of n_rows - 1 steps."""
    rng = np.random.default_rng(seed)
    horizon = step * (n_rows - 1)
    injection = []
    for _ in range(n_injectors):
        starts = np.concatenate([[0.0], np.sort(rng.choice(np.arange(1, n_rows - 1), size=2, replace=False)) * step])
        rates = rng.uniform(200.0, 1000.0, size=3)
        injection.append([(float(s), float(r)) for s, r in zip(starts, rates)])
    return ScheduleConfig(horizon=horizon, step=step, injection=injection, producer_bhp=[1000.0])


def random_crm_world(
    n_injectors: int, n_producers: int, n_rows: int, seed: int = 0, step: float = 10.0, noise: float = 0.0
) -> Tuple[CrmParams, TimeSeriesPanel]:
    """Random generating parameters, schedule and the CRM-world panel they produce."""
    params = random_crm_params(n_injectors, n_producers, seed)
    schedule = random_schedule(n_injectors, n_rows, step, seed)
    first_rates = np.array([steps[0][1] for steps in schedule.injection])
    q0 = first_rates @ params.F.values
    return params, generate_crm_world(params, schedule, q0, noise=noise, seed=seed)
