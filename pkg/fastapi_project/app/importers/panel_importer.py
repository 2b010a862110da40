from pathlib import Path
import csv
from typing import List, Optional, Union

import numpy as np

from ..domain import TimeSeriesPanel
from ..schemas import PanelPayload, WellNetwork
from ..utils.error_handling import ErrorCode, ValidationError


def _ids_with_prefix(header: List[str], prefix: str) -> List[str]:
    return [h[len(prefix):] for h in header if h.startswith(prefix)]


def read_panel_csv(csv_path: Union[str, Path], wells: Optional[WellNetwork] = None) -> TimeSeriesPanel:
    """
    Read a panel CSV file.
    Expected columns: time_days, then I_<id>, pI_<id> per injector and q_<id>, pwf_<id> per producer.
    When `wells` is given, columns are ordered to match it.
    """
    p = Path(csv_path)
    if not p.exists():
        raise FileNotFoundError(csv_path)
    with p.open("r", encoding="utf-8-sig", newline="") as f:
        reader = csv.DictReader(f)
        header = list(reader.fieldnames or [])
        rows = list(reader)
    if not header or header[0] != "time_days":
        raise ValidationError("panel CSV must start with a time_days column", field="header")

    injector_ids = wells.injector_ids if wells else _ids_with_prefix(header, "I_")
    producer_ids = wells.producer_ids if wells else _ids_with_prefix(header, "q_")
    required = [f"I_{i}" for i in injector_ids] + [f"pI_{i}" for i in injector_ids]
    required += [f"q_{j}" for j in producer_ids] + [f"pwf_{j}" for j in producer_ids]
    missing = [c for c in required if c not in header]
    if missing:
        raise ValidationError(f"panel CSV is missing columns {missing}", field="header", code=ErrorCode.SHAPE_MISMATCH)

    def column(name: str) -> np.ndarray:
        try:
            return np.array([float(r[name]) for r in rows])
        except ValueError as exc:
            raise ValidationError(f"column {name} holds a non-numeric value", field=name) from exc

    def matrix(prefix: str, ids: List[str]) -> np.ndarray:
        if not ids:
            return np.zeros((len(rows), 0))
        return np.column_stack([column(f"{prefix}{i}") for i in ids])

    return TimeSeriesPanel(
        times=column("time_days"),
        I=matrix("I_", injector_ids),
        p_I=matrix("pI_", injector_ids),
        q=matrix("q_", producer_ids),
        p_wf=matrix("pwf_", producer_ids),
        injector_ids=injector_ids,
        producer_ids=producer_ids,
    )


def write_panel_csv(panel: TimeSeriesPanel, csv_path: Union[str, Path]) -> Path:
    p = Path(csv_path)
    p.parent.mkdir(parents=True, exist_ok=True)
    header = ["time_days"]
    header += [f"I_{i}" for i in panel.injector_ids] + [f"pI_{i}" for i in panel.injector_ids]
    header += [f"q_{j}" for j in panel.producer_ids] + [f"pwf_{j}" for j in panel.producer_ids]
    body = np.column_stack([panel.times, panel.I, panel.p_I, panel.q, panel.p_wf])
    with p.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in body:
            writer.writerow([repr(float(v)) for v in row])
    return p


def panel_from_payload(payload: PanelPayload) -> TimeSeriesPanel:
    return TimeSeriesPanel(
        times=np.asarray(payload.times, dtype=float),
        I=np.asarray(payload.I, dtype=float),
        p_I=np.asarray(payload.p_I, dtype=float),
        q=np.asarray(payload.q, dtype=float),
        p_wf=np.asarray(payload.p_wf, dtype=float),
        injector_ids=payload.injector_ids,
        producer_ids=payload.producer_ids,
    )
