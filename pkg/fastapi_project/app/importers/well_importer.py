from pathlib import Path
import csv
from typing import Union

from ..schemas import Well, WellNetwork
from ..utils.error_handling import ValidationError

WELL_COLUMNS = ["well_id", "kind", "x", "y"]


def read_wells_csv(csv_path: Union[str, Path]) -> WellNetwork:
    """
    Read a wells CSV file.
    Expected columns: well_id, kind (INJ or PRD), x, y
    """
    p = Path(csv_path)
    if not p.exists():
        raise FileNotFoundError(csv_path)
    injectors, producers = [], []
    with p.open("r", encoding="utf-8-sig", newline="") as f:
        reader = csv.DictReader(f)
        missing = set(WELL_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValidationError(f"wells CSV is missing columns {sorted(missing)}", field="header")
        for line, row in enumerate(reader, start=2):
            kind = row["kind"].strip().upper()
            well = Well(id=row["well_id"].strip(), x=float(row["x"]), y=float(row["y"]))
            if kind == "INJ":
                injectors.append(well)
            elif kind == "PRD":
                producers.append(well)
            else:
                raise ValidationError(f"line {line}: kind must be INJ or PRD, got '{kind}'", field="kind", value=kind)
    return WellNetwork(injectors=injectors, producers=producers)


def write_wells_csv(wells: WellNetwork, csv_path: Union[str, Path]) -> Path:
    p = Path(csv_path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(WELL_COLUMNS)
        for kind, group in (("INJ", wells.injectors), ("PRD", wells.producers)):
            for w in group:
                writer.writerow([w.id, kind, repr(float(w.x)), repr(float(w.y))])
    return p
