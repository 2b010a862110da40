from pathlib import Path
import csv
from typing import List, Tuple, Union

import numpy as np

from ..domain import AdjacencyMatrix, ConnectivityMatrix
from ..utils.error_handling import ValidationError


def read_matrix_csv(csv_path: Union[str, Path]) -> Tuple[List[str], List[str], np.ndarray]:
    """
    Read a connectivity CSV file.
    Layout: first row is a corner cell followed by producer ids; each later row is an injector id followed by values.
    """
    p = Path(csv_path)
    if not p.exists():
        raise FileNotFoundError(csv_path)
    with p.open("r", encoding="utf-8-sig", newline="") as f:
        rows = [row for row in csv.reader(f) if row]
    if len(rows) < 2:
        raise ValidationError("connectivity CSV needs a header and at least one injector row", field="rows")
    producer_ids = [c.strip() for c in rows[0][1:]]
    injector_ids, values = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(producer_ids) + 1:
            raise ValidationError(f"line {line}: expected {len(producer_ids)} values", field="row", value=line)
        injector_ids.append(row[0].strip())
        values.append([float(v) for v in row[1:]])
    return injector_ids, producer_ids, np.array(values)


def read_connectivity_csv(csv_path: Union[str, Path]) -> ConnectivityMatrix:
    injector_ids, producer_ids, values = read_matrix_csv(csv_path)
    return ConnectivityMatrix(values=values, injector_ids=injector_ids, producer_ids=producer_ids)


def read_adjacency_csv(csv_path: Union[str, Path]) -> AdjacencyMatrix:
    injector_ids, producer_ids, values = read_matrix_csv(csv_path)
    return AdjacencyMatrix(values=values.astype(int), injector_ids=injector_ids, producer_ids=producer_ids)


def write_matrix_csv(matrix: Union[ConnectivityMatrix, AdjacencyMatrix], csv_path: Union[str, Path]) -> Path:
    """Values are written with repr(), which round-trips doubles exactly."""
    p = Path(csv_path)
    p.parent.mkdir(parents=True, exist_ok=True)
    integral = isinstance(matrix, AdjacencyMatrix)
    with p.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["injector"] + list(matrix.producer_ids))
        for inj, row in zip(matrix.injector_ids, matrix.values):
            writer.writerow([inj] + [str(int(v)) if integral else repr(float(v)) for v in row])
    return p
