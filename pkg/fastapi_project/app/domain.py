"""
Numpy-backed domain types.

All types are immutable after construction: arrays are copied and flagged
read-only, so instances can be shared across threads and processes.
Shapes follow the [rows x wells] convention: rows are time steps, columns are
wells in the order of the associated id lists.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .schemas import FluidProps, WellNetwork
from .utils.error_handling import ErrorCode, ValidationError


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _require_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ValidationError(
            f"{name} contains non-finite values at index {tuple(int(i) for i in bad)}",
            field=name,
            code=ErrorCode.NON_FINITE_INPUT,
        )


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Aligned rates and pressures of a well network on one shared time axis."""

    times: np.ndarray
    I: np.ndarray
    p_I: np.ndarray
    q: np.ndarray
    p_wf: np.ndarray
    injector_ids: Tuple[str, ...]
    producer_ids: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        for name in ("I", "p_I", "q", "p_wf"):
            object.__setattr__(self, name, _frozen(np.atleast_2d(getattr(self, name))))
        object.__setattr__(self, "injector_ids", tuple(self.injector_ids))
        object.__setattr__(self, "producer_ids", tuple(self.producer_ids))

        n = self.times.shape[0]
        if self.times.ndim != 1 or n < 1:
            raise ValidationError("times must be a non-empty 1-D array", field="times")
        expected = {
            "I": (n, len(self.injector_ids)),
            "p_I": (n, len(self.injector_ids)),
            "q": (n, len(self.producer_ids)),
            "p_wf": (n, len(self.producer_ids)),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValidationError(
                    f"{name} has shape {arr.shape}, expected {shape}",
                    field=name,
                    code=ErrorCode.SHAPE_MISMATCH,
                )
        for name in ("times", "I", "p_I", "q", "p_wf"):
            _require_finite(name, getattr(self, name))
        if n > 1 and np.any(np.diff(self.times) <= 0):
            k = int(np.argmax(np.diff(self.times) <= 0)) + 1
            raise ValidationError(f"times must be strictly increasing (row {k})", field="times", value=k)
        if np.any(self.I < 0):
            raise ValidationError("injection rates must be >= 0", field="I")
        if np.any(self.q < 0):
            raise ValidationError("production rates must be >= 0", field="q")

    @property
    def n_rows(self) -> int:
        return int(self.times.shape[0])

    @property
    def n_injectors(self) -> int:
        return len(self.injector_ids)

    @property
    def n_producers(self) -> int:
        return len(self.producer_ids)

    def rows(self, index: range) -> "TimeSeriesPanel":
        """Sub-panel restricted to a contiguous row range."""
        sl = slice(index.start, index.stop)
        return TimeSeriesPanel(
            times=self.times[sl],
            I=self.I[sl],
            p_I=self.p_I[sl],
            q=self.q[sl],
            p_wf=self.p_wf[sl],
            injector_ids=self.injector_ids,
            producer_ids=self.producer_ids,
        )

    def permute_producers(self, order: Sequence[int]) -> "TimeSeriesPanel":
        order = list(order)
        return TimeSeriesPanel(
            times=self.times,
            I=self.I,
            p_I=self.p_I,
            q=self.q[:, order],
            p_wf=self.p_wf[:, order],
            injector_ids=self.injector_ids,
            producer_ids=[self.producer_ids[j] for j in order],
        )


@dataclass(frozen=True)
class DataSplit:
    """Contiguous chronological train / validation / test row ranges."""

    train: range
    validation: range
    test: range

    def __post_init__(self):
        if not (self.train.stop == self.validation.start and self.validation.stop == self.test.start):
            raise ValidationError("split ranges must be contiguous and ordered", field="split")
        for name in ("train", "validation", "test"):
            if len(getattr(self, name)) == 0:
                raise ValidationError(f"{name} range is empty", field=name)

    @property
    def n_rows(self) -> int:
        return self.test.stop - self.train.start

    def lengths(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


@dataclass(frozen=True)
class ConnectivityMatrix:
    """Injector-to-producer allocation fractions [N_I x N_P]."""

    values: np.ndarray
    injector_ids: Tuple[str, ...]
    producer_ids: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.atleast_2d(self.values)))
        object.__setattr__(self, "injector_ids", tuple(self.injector_ids))
        object.__setattr__(self, "producer_ids", tuple(self.producer_ids))
        shape = (len(self.injector_ids), len(self.producer_ids))
        if self.values.shape != shape:
            raise ValidationError(
                f"connectivity has shape {self.values.shape}, expected {shape}",
                field="F",
                code=ErrorCode.SHAPE_MISMATCH,
            )
        _require_finite("F", self.values)

    def in_unit_interval(self, atol: float = 0.0) -> bool:
        return bool(np.all(self.values >= -atol) and np.all(self.values <= 1.0 + atol))

    def satisfies_crm_constraints(self, atol: float = 1e-12) -> bool:
        """0 <= F_ij <= 1 and every injector row sums to at most 1."""
        return self.in_unit_interval(atol) and bool(np.all(self.values.sum(axis=1) <= 1.0 + atol))


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Binary expert prior e_ij in {0, 1}; every injector keeps at least one connection."""

    values: np.ndarray
    injector_ids: Tuple[str, ...]
    producer_ids: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.atleast_2d(self.values), dtype=int))
        object.__setattr__(self, "injector_ids", tuple(self.injector_ids))
        object.__setattr__(self, "producer_ids", tuple(self.producer_ids))
        shape = (len(self.injector_ids), len(self.producer_ids))
        if self.values.shape != shape:
            raise ValidationError(
                f"adjacency has shape {self.values.shape}, expected {shape}",
                field="A",
                code=ErrorCode.SHAPE_MISMATCH,
            )
        if not np.all(np.isin(self.values, (0, 1))):
            raise ValidationError("adjacency entries must be 0 or 1", field="A")
        empty = np.flatnonzero(self.values.sum(axis=1) == 0)
        if empty.size:
            raise ValidationError(
                f"injector {self.injector_ids[int(empty[0])]} has no connection", field="A", value=int(empty[0])
            )


@dataclass(frozen=True)
class ReservoirGrid:
    """2-D property rasters [ny x nx]: permeability (mD) and porosity (fraction)."""

    nx: int
    ny: int
    dx: float
    dy: float
    perm: np.ndarray
    phi: np.ndarray
    fluid: FluidProps = field(default_factory=FluidProps)

    def __post_init__(self):
        object.__setattr__(self, "perm", _frozen(self.perm))
        object.__setattr__(self, "phi", _frozen(self.phi))
        if self.nx < 2 or self.ny < 2:
            raise ValidationError("grid needs nx, ny >= 2", field="nx")
        if self.dx <= 0 or self.dy <= 0:
            raise ValidationError("cell sizes must be positive", field="dx")
        for name in ("perm", "phi"):
            arr = getattr(self, name)
            if arr.shape != (self.ny, self.nx):
                raise ValidationError(
                    f"{name} has shape {arr.shape}, expected {(self.ny, self.nx)}",
                    field=name,
                    code=ErrorCode.SHAPE_MISMATCH,
                )
            _require_finite(name, arr)
        if np.any(self.perm <= 0):
            raise ValidationError("permeability must be > 0 everywhere", field="perm")
        # phi == 1 is accepted for unit-normalized fixtures
        if np.any(self.phi <= 0) or np.any(self.phi > 1):
            raise ValidationError("porosity must lie in (0, 1]", field="phi")

    @property
    def width(self) -> float:
        return self.nx * self.dx

    @property
    def height(self) -> float:
        return self.ny * self.dy

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.width and 0.0 <= y < self.height

    def cell_of(self, x: float, y: float) -> Tuple[int, int]:
        """(row, col) of the cell containing a point; rows follow y, columns follow x."""
        if not self.contains(x, y):
            raise ValidationError(f"point ({x}, {y}) lies outside the grid", field="well", value=(x, y))
        return int(y // self.dy), int(x // self.dx)

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        return (col + 0.5) * self.dx, (row + 0.5) * self.dy

    def check_wells(self, wells: WellNetwork) -> None:
        for well in list(wells.injectors) + list(wells.producers):
            if not self.contains(well.x, well.y):
                raise ValidationError(f"well {well.id} lies outside the grid", field=well.id, value=(well.x, well.y))


@dataclass(frozen=True)
class SpeedField:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if np.any(self.values <= 0):
            raise ValidationError("speed must be strictly positive", field="speed")


@dataclass(frozen=True)
class ArrivalField:
    """Arrival times t(x) with t = 0 on the sources.

    `seeded` marks cells initialized from the straight-ray travel time around a
    source; `accepted` lists arrival values in the order cells were accepted.
    """

    t: np.ndarray
    seeded: np.ndarray
    accepted: np.ndarray
    sources: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "t", _frozen(self.t))
        object.__setattr__(self, "seeded", _frozen(self.seeded, dtype=bool))
        object.__setattr__(self, "accepted", _frozen(self.accepted))
        object.__setattr__(self, "sources", tuple(tuple(s) for s in self.sources))


@dataclass(frozen=True)
class CrmParams:
    """Per-producer time constant tau (days), productivity index J (bbl/day/psi) and connectivity F."""

    tau: np.ndarray
    J: np.ndarray
    F: ConnectivityMatrix

    def __post_init__(self):
        object.__setattr__(self, "tau", _frozen(np.atleast_1d(self.tau)))
        object.__setattr__(self, "J", _frozen(np.atleast_1d(self.J)))
        n_p = len(self.F.producer_ids)
        for name in ("tau", "J"):
            arr = getattr(self, name)
            if arr.shape != (n_p,):
                raise ValidationError(
                    f"{name} has shape {arr.shape}, expected {(n_p,)}", field=name, code=ErrorCode.SHAPE_MISMATCH
                )
            _require_finite(name, arr)
            if np.any(arr <= 0):
                raise ValidationError(f"{name} must be > 0", field=name, value=arr.tolist())

    @property
    def n_producers(self) -> int:
        return int(self.tau.shape[0])

    def pore_volume(self, c_t: float) -> np.ndarray:
        """V_p = tau * J / C_t (bbl)."""
        return self.tau * self.J / c_t


def maybe_ids(prefix: str, n: int, ids: Optional[Sequence[str]] = None) -> Tuple[str, ...]:
    """Default well ids (INJ1, INJ2, ...) when none are supplied."""
    if ids is not None:
        return tuple(ids)
    return tuple(f"{prefix}{i + 1}" for i in range(n))
