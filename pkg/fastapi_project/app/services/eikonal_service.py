"""
Eikonal Service

Fast marching solution of F(x)|grad t(x)| = 1 on reservoir property grids and
the sector search that turns injector arrival fields into the expert
injector-producer adjacency matrix.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..domain import AdjacencyMatrix, ArrivalField, ReservoirGrid, SpeedField
from ..schemas import GraphBuildConfig, WellNetwork
from ..utils.error_handling import ValidationError

logger = logging.getLogger(__name__)

MIN_SPEED = 1e-12
DEFAULT_INIT_RADIUS = 8.0
_RAY_SAMPLE = 0.25  # cells per slowness sample along a seeding ray

Cell = Tuple[int, int]


def speed_field(grid: ReservoirGrid) -> SpeedField:
    """
    Diffusive front speed sqrt(k / (mu c_t phi)), in length per square-root time.

    No conversion constant is applied: only the ordering of arrivals is used.
    """
    perm = np.asarray(grid.perm, dtype=float)
    phi = np.asarray(grid.phi, dtype=float)
    if np.any(perm <= 0) or np.any(phi <= 0):
        raise ValidationError("permeability and porosity must be positive", field="grid")
    speed = np.sqrt(perm / (grid.fluid.mu * grid.fluid.c_t * phi))
    return SpeedField(np.maximum(speed, MIN_SPEED))


def upwind_update(
    t: np.ndarray,
    slowness: float,
    row: int,
    col: int,
    dx: float,
    dy: float,
    known: np.ndarray,
) -> float:
    """
    First-order upwind value at (row, col) from the `known` neighbours.

    Solves (t - a)^2/dx^2 + (t - b)^2/dy^2 = s^2 with a, b the smallest known
    neighbour on each axis, falling back to the one-sided solution when the
    two-sided root is not upwind of both.
    """
    ny, nx = t.shape
    a = math.inf
    for c in (col - 1, col + 1):
        if 0 <= c < nx and known[row, c]:
            a = min(a, t[row, c])
    b = math.inf
    for r in (row - 1, row + 1):
        if 0 <= r < ny and known[r, col]:
            b = min(b, t[r, col])

    one_sided = min(a + dx * slowness, b + dy * slowness)
    if math.isinf(a) or math.isinf(b):
        return one_sided

    wx, wy = 1.0 / (dx * dx), 1.0 / (dy * dy)
    qa = wx + wy
    qb = -2.0 * (a * wx + b * wy)
    qc = a * a * wx + b * b * wy - slowness * slowness
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        return one_sided
    root = (-qb + math.sqrt(disc)) / (2.0 * qa)
    if root < max(a, b):
        return one_sided
    return min(root, one_sided)


def ray_travel_time(slowness: np.ndarray, source: Cell, target: Cell, dx: float, dy: float) -> float:
    """Straight-ray travel time between cell centres by midpoint sampling of the slowness."""
    dr = target[0] - source[0]
    dc = target[1] - source[1]
    length = math.hypot(dc * dx, dr * dy)
    if length == 0.0:
        return 0.0
    n = max(1, int(math.ceil(math.hypot(dr, dc) / _RAY_SAMPLE)))
    frac = (np.arange(n) + 0.5) / n
    rows = np.floor(source[0] + 0.5 + frac * dr).astype(int)
    cols = np.floor(source[1] + 0.5 + frac * dc).astype(int)
    rows = np.clip(rows, 0, slowness.shape[0] - 1)
    cols = np.clip(cols, 0, slowness.shape[1] - 1)
    return float(length * np.mean(slowness[rows, cols]))


def solve_eikonal(
    speed: SpeedField,
    sources: Sequence[Cell],
    dx: float = 1.0,
    dy: float = 1.0,
    init_radius: float = DEFAULT_INIT_RADIUS,
) -> ArrivalField:
    """
    First-order fast marching from `sources` (arrival 0).

    Cells within `init_radius` cells of a source start as trial cells holding
    the straight-ray travel time; marching keeps the smaller of that and its
    own upwind value.
    """
    if not sources:
        raise ValidationError("at least one source cell is required", field="sources")
    values = np.asarray(speed.values, dtype=float)
    ny, nx = values.shape
    slowness = 1.0 / np.maximum(values, MIN_SPEED)

    t = np.full((ny, nx), math.inf)
    accepted = np.zeros((ny, nx), dtype=bool)
    seeded = np.zeros((ny, nx), dtype=bool)
    heap: List[Tuple[float, int, int]] = []

    for row, col in sources:
        if not (0 <= row < ny and 0 <= col < nx):
            raise ValidationError(f"source {(row, col)} lies outside the grid", field="sources", value=(row, col))
        t[row, col] = 0.0
        heapq.heappush(heap, (0.0, row, col))

    if init_radius > 0:
        reach = int(math.floor(init_radius))
        for row, col in sources:
            for r in range(max(0, row - reach), min(ny, row + reach + 1)):
                for c in range(max(0, col - reach), min(nx, col + reach + 1)):
                    if (r, c) == (row, col) or math.hypot(r - row, c - col) > init_radius:
                        continue
                    ray = ray_travel_time(slowness, (row, col), (r, c), dx, dy)
                    if ray < t[r, c]:
                        t[r, c] = ray
                        seeded[r, c] = True
                        heapq.heappush(heap, (ray, r, c))

    order: List[float] = []
    while heap:
        value, row, col = heapq.heappop(heap)
        if accepted[row, col] or value > t[row, col]:
            continue
        accepted[row, col] = True
        order.append(value)
        for r, c in ((row - 1, col), (row + 1, col), (row, col - 1), (row, col + 1)):
            if not (0 <= r < ny and 0 <= c < nx) or accepted[r, c]:
                continue
            candidate = upwind_update(t, slowness[r, c], r, c, dx, dy, accepted)
            if candidate < t[r, c]:
                t[r, c] = candidate
                seeded[r, c] = False
                heapq.heappush(heap, (candidate, r, c))

    for row, col in sources:
        seeded[row, col] = False
    logger.debug("Fast marching accepted %d cells from %d sources", len(order), len(sources))
    return ArrivalField(t=t, seeded=seeded, accepted=np.asarray(order), sources=tuple(sources))


def arrival_at_wells(field: ArrivalField, grid: ReservoirGrid, wells: WellNetwork) -> np.ndarray:
    """Arrival at the cell containing each producer."""
    return np.array([field.t[grid.cell_of(w.x, w.y)] for w in wells.producers])


def sector_of(dx: float, dy: float, sectors: int) -> int:
    """Half-open angular sectors [0, 360/S), [360/S, 2*360/S), ... counter-clockwise from +x."""
    angle = math.degrees(math.atan2(dy, dx)) % 360.0
    width = 360.0 / sectors
    return min(int(angle // width), sectors - 1)


@dataclass(frozen=True)
class WellGraph:
    adjacency: AdjacencyMatrix
    arrivals: np.ndarray  # [N_I x N_P]


def select_connections(
    arrivals: np.ndarray,
    sectors_of: np.ndarray,
    config: GraphBuildConfig,
    coincident: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Sector search on precomputed arrivals.

    Within each sector the `k` producers with least arrival are kept; equal
    arrivals go to the lower producer index. Coincident producers are always
    connected and do not take a sector slot.
    """
    n_i, n_p = arrivals.shape
    coincident = np.zeros((n_i, n_p), dtype=bool) if coincident is None else coincident
    e = np.zeros((n_i, n_p), dtype=int)
    for i in range(n_i):
        for s in range(config.sectors):
            members = [j for j in range(n_p) if sectors_of[i, j] == s and not coincident[i, j]]
            members.sort(key=lambda j: (arrivals[i, j], j))
            for j in members[: config.k]:
                e[i, j] = 1
        e[i, coincident[i]] = 1
        if config.max_arrival is not None:
            keep = (arrivals[i] <= config.max_arrival) | coincident[i]
            e[i] = e[i] * keep
        if e[i].sum() == 0:
            e[i, int(np.argmin(arrivals[i]))] = 1
    return e


def build_graph_with_arrivals(grid: ReservoirGrid, wells: WellNetwork, config: GraphBuildConfig) -> WellGraph:
    grid.check_wells(wells)
    speed = speed_field(grid)
    producer_cells = [grid.cell_of(w.x, w.y) for w in wells.producers]

    arrivals = np.zeros((wells.n_injectors, wells.n_producers))
    sectors = np.zeros((wells.n_injectors, wells.n_producers), dtype=int)
    coincident = np.zeros((wells.n_injectors, wells.n_producers), dtype=bool)

    for i, injector in enumerate(wells.injectors):
        source = grid.cell_of(injector.x, injector.y)
        field = solve_eikonal(speed, [source], grid.dx, grid.dy, config.init_radius)
        at_producers = arrival_at_wells(field, grid, wells)
        for j, producer in enumerate(wells.producers):
            if producer_cells[j] == source:
                logger.warning("Producer %s shares a cell with injector %s; connecting with arrival 0",
                               producer.id, injector.id)
                coincident[i, j] = True
                arrivals[i, j] = 0.0
                continue
            arrivals[i, j] = at_producers[j]
            sectors[i, j] = sector_of(producer.x - injector.x, producer.y - injector.y, config.sectors)
        logger.info("Injector %s arrivals: %s", injector.id, np.array2string(arrivals[i], precision=4))

    e = select_connections(arrivals, sectors, config, coincident)
    adjacency = AdjacencyMatrix(values=e, injector_ids=wells.injector_ids, producer_ids=wells.producer_ids)
    return WellGraph(adjacency=adjacency, arrivals=arrivals)


def build_graph(grid: ReservoirGrid, wells: WellNetwork, config: GraphBuildConfig = None) -> AdjacencyMatrix:
    """Expert adjacency: per injector, the least-arrival producers in each angular sector."""
    return build_graph_with_arrivals(grid, wells, config or GraphBuildConfig()).adjacency
