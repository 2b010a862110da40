from pathlib import Path
import csv
import json
from typing import Union

import numpy as np

from ..domain import ReservoirGrid
from ..schemas import FluidProps, GridPayload
from ..utils.error_handling import ValidationError

META_FILE = "grid.json"
PERM_FILE = "perm.csv"
PHI_FILE = "phi.csv"


def _read_raster(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(str(path))
    with path.open("r", encoding="utf-8-sig", newline="") as f:
        rows = [[float(v) for v in row] for row in csv.reader(f) if row]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValidationError(f"{path.name} has ragged rows", field=path.name)
    return np.array(rows)


def _write_raster(path: Path, values: np.ndarray) -> None:
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        for row in values:
            writer.writerow([repr(float(v)) for v in row])


def grid_from_payload(payload: GridPayload) -> ReservoirGrid:
    return ReservoirGrid(
        nx=payload.nx,
        ny=payload.ny,
        dx=payload.dx,
        dy=payload.dy,
        perm=np.asarray(payload.perm, dtype=float),
        phi=np.asarray(payload.phi, dtype=float),
        fluid=FluidProps(c_t=payload.ct_per_psi, mu=payload.mu_cp),
    )


def read_grid_dir(grid_dir: Union[str, Path]) -> ReservoirGrid:
    """
    Read a grid directory.
    Expected files: grid.json {nx, ny, dx, dy, mu_cp, ct_per_psi}, perm.csv and phi.csv (row-major, ny rows of nx values)
    """
    d = Path(grid_dir)
    meta_path = d / META_FILE
    if not meta_path.exists():
        raise FileNotFoundError(str(meta_path))
    meta = json.loads(meta_path.read_text())
    payload = GridPayload(
        perm=_read_raster(d / PERM_FILE).tolist(),
        phi=_read_raster(d / PHI_FILE).tolist(),
        **meta,
    )
    return grid_from_payload(payload)


def write_grid_dir(grid: ReservoirGrid, grid_dir: Union[str, Path]) -> Path:
    d = Path(grid_dir)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "nx": grid.nx,
        "ny": grid.ny,
        "dx": grid.dx,
        "dy": grid.dy,
        "mu_cp": grid.fluid.mu,
        "ct_per_psi": grid.fluid.c_t,
    }
    (d / META_FILE).write_text(json.dumps(meta, indent=2))
    _write_raster(d / PERM_FILE, grid.perm)
    _write_raster(d / PHI_FILE, grid.phi)
    return d
