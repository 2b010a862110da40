"""
Benchmark Service

Runs every method on every case, scores the test window, and writes the
report, tables, connectivity matrices, predictions and figures.

Methods:
- pignn_expert: PI-GNN on the fast-marching expert graph
- pignn_self_learned: PI-GNN on the fully connected graph
- gnn_baseline: the same network trained without the physics term
- crm: projected-gradient CRM fit
"""

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field
from datetime import UTC, datetime
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..domain import AdjacencyMatrix, ConnectivityMatrix, DataSplit, TimeSeriesPanel
from ..importers.connectivity_importer import read_adjacency_csv, write_matrix_csv
from ..importers.grid_importer import read_grid_dir
from ..importers.panel_importer import read_panel_csv
from ..importers.well_importer import read_wells_csv
from ..schemas import (
    BenchmarkConfig,
    BenchmarkReport,
    CaseConfig,
    CaseResult,
    ConnectivityPayload,
    MethodResult,
    RunMetadata,
    WellNetwork,
)
from ..utils.error_handling import AppError, ErrorCode, handle_api_error, log_error
from .crm_service import crm_fit_with_diagnostics, forecast_panel
from .eikonal_service import build_graph
from .metrics_service import rmse_by_producer, total_rmse
from .pignn_service import ensemble_predict, extract_connectivity
from .plot_service import export_plots
from .preprocessing_service import split_panel
from .training_service import train_ensemble

logger = logging.getLogger(__name__)

METHODS = ("pignn_expert", "pignn_self_learned", "gnn_baseline", "crm")
TOTAL = "Total"


@dataclass
class CaseData:
    config: CaseConfig
    wells: WellNetwork
    panel: TimeSeriesPanel
    split: DataSplit
    adjacency: Optional[AdjacencyMatrix] = None


@dataclass
class MethodOutput:
    q_hat: np.ndarray
    connectivity: ConnectivityMatrix


@dataclass
class BenchmarkRun:
    report: BenchmarkReport
    cases: List[CaseData] = field(default_factory=list)
    predictions: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)


def config_hash(config: BenchmarkConfig) -> str:
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_case(case: CaseConfig) -> CaseData:
    wells = read_wells_csv(case.wells_path)
    panel = read_panel_csv(case.panel_path, wells)
    split = split_panel(panel, case.fractions)
    adjacency = None
    if case.adjacency_path:
        adjacency = read_adjacency_csv(case.adjacency_path)
    elif case.grid_dir:
        adjacency = build_graph(read_grid_dir(case.grid_dir), wells, case.graph)
    return CaseData(config=case, wells=wells, panel=panel, split=split, adjacency=adjacency)


def mean_connectivity(models) -> ConnectivityMatrix:
    matrices = [extract_connectivity(m) for m in models]
    return ConnectivityMatrix(
        values=np.mean([c.values for c in matrices], axis=0),
        injector_ids=matrices[0].injector_ids,
        producer_ids=matrices[0].producer_ids,
    )


def run_method(method: str, data: CaseData, config: BenchmarkConfig) -> MethodOutput:
    """Predicted rates for every panel row and the method's connectivity estimate."""
    case = data.config
    if method not in METHODS:
        raise AppError(f"unknown method {method}", code=ErrorCode.VALIDATION_ERROR, status_code=400)
    if method == "crm":
        fit = crm_fit_with_diagnostics(data.panel, data.split, case.c_t,
                                       multistarts=config.crm_multistarts, seed=config.crm_seed)
        return MethodOutput(q_hat=forecast_panel(fit.params, data.panel, data.split), connectivity=fit.params.F)

    graph_mode = "expert" if method == "pignn_expert" else "self_learned"
    model_config = config.model.model_copy(update={"graph_mode": graph_mode, "c_t": case.c_t})
    loss_config = config.loss
    if method == "gnn_baseline":
        loss_config = loss_config.model_copy(update={"lambda_f": 0.0})

    results = train_ensemble(
        data.panel,
        data.split,
        model_config,
        loss_config,
        config.train,
        adjacency=data.adjacency if graph_mode == "expert" else None,
        seeds=case.seeds,
    )
    models = [r.model for r in results]
    return MethodOutput(q_hat=ensemble_predict(models, data.panel), connectivity=mean_connectivity(models))


def _payload(matrix: Union[ConnectivityMatrix, AdjacencyMatrix]) -> ConnectivityPayload:
    return ConnectivityPayload(
        injector_ids=list(matrix.injector_ids),
        producer_ids=list(matrix.producer_ids),
        values=np.asarray(matrix.values, dtype=float).tolist(),
    )


def run_case(data: CaseData, config: BenchmarkConfig, durations: Dict[str, float]) -> Tuple[CaseResult, Dict[str, np.ndarray]]:
    """All methods on one case; a failing method is recorded and the others still run."""
    name = data.config.name
    test = data.split.test
    observed = data.panel.q[test.start:test.stop]
    methods, predictions = [], {}
    connectivity: Dict[str, ConnectivityPayload] = {}
    if data.adjacency is not None:
        connectivity["expert_prior"] = _payload(data.adjacency)

    for method in METHODS:
        started = time.perf_counter()
        try:
            output = run_method(method, data, config)
            per_producer = rmse_by_producer(observed, output.q_hat[test.start:test.stop], data.panel.producer_ids)
            result = MethodResult(
                method=method,
                per_producer=per_producer,
                total=total_rmse(list(per_producer.values())),
            )
            predictions[method] = output.q_hat
            connectivity[method] = _payload(output.connectivity)
        except Exception as exc:
            error = handle_api_error(exc, context={"case": name, "method": method})
            log_error(error)
            result = MethodResult(method=method, status="failed", error=error.to_dict())
        result.duration_s = time.perf_counter() - started
        durations[f"{name}/{method}"] = result.duration_s
        methods.append(result)
        logger.info("%s / %s: %s total=%s", name, method, result.status, result.total)

    scored = [m for m in methods if m.status == "ok"]
    best = min(scored, key=lambda m: m.total).method if scored else None
    return (
        CaseResult(
            case=name,
            producer_ids=list(data.panel.producer_ids),
            methods=methods,
            best_method=best,
            connectivity=connectivity,
        ),
        predictions,
    )


def _failed_case(case: CaseConfig, error: AppError) -> CaseResult:
    return CaseResult(
        case=case.name,
        producer_ids=[],
        methods=[MethodResult(method=m, status="failed", error=error.to_dict()) for m in METHODS],
    )


def run_benchmark(config: BenchmarkConfig) -> BenchmarkRun:
    """Every method on every case, in config order; seeds come only from the case configs."""
    started = time.perf_counter()
    durations: Dict[str, float] = {}
    results, loaded, predictions = [], [], {}
    for case in config.cases:
        try:
            data = load_case(case)
        except Exception as exc:
            error = handle_api_error(exc, context={"case": case.name})
            log_error(error)
            results.append(_failed_case(case, error))
            continue
        result, case_predictions = run_case(data, config, durations)
        results.append(result)
        loaded.append(data)
        predictions[case.name] = case_predictions
    durations["total"] = time.perf_counter() - started

    seeds = sorted({s for case in config.cases for s in case.seeds})
    report = BenchmarkReport(
        cases=results,
        metadata=RunMetadata(
            seeds=seeds,
            config_hash=config_hash(config),
            created_at=datetime.now(UTC).isoformat(),
            durations=durations,
        ),
    )
    return BenchmarkRun(report=report, cases=loaded, predictions=predictions)


# --- tables ---

def _fmt(value: Optional[float]) -> str:
    return "failed" if value is None else f"{value:.3f}"


def export_table(report: BenchmarkReport) -> Tuple[str, str]:
    """
    Text table (one block per case, producers then Total, column minima wrapped
    in **bold** markers) and a long-format CSV with exact values.
    """
    lines = []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["case", "method", "producer", "rmse", "is_best", "status"])

    for case in report.cases:
        columns = list(case.producer_ids) + [TOTAL]
        ok = [m for m in case.methods if m.status == "ok"]
        minima = {}
        for col in columns:
            values = [m.total if col == TOTAL else m.per_producer[col] for m in ok]
            minima[col] = min(values) if values else None

        width = max([len(m.method) for m in case.methods] + [6])
        lines.append(f"Case: {case.case}")
        lines.append(" | ".join(["Method".ljust(width)] + [c.rjust(12) for c in columns]))
        for m in case.methods:
            cells = []
            for col in columns:
                value = None if m.status != "ok" else (m.total if col == TOTAL else m.per_producer[col])
                text = _fmt(value)
                if value is not None and value == minima[col]:
                    text = f"**{text}**"
                cells.append(text.rjust(12))
            lines.append(" | ".join([m.method.ljust(width)] + cells))
        lines.append("")

        for m in case.methods:
            if m.status != "ok":
                writer.writerow([case.case, m.method, TOTAL, "", 0, m.status])
                continue
            for pid in case.producer_ids:
                value = m.per_producer[pid]
                writer.writerow([case.case, m.method, pid, repr(value), int(value == minima[pid]), m.status])
            writer.writerow([case.case, m.method, TOTAL, repr(m.total), int(m.method == case.best_method), m.status])

    return "\n".join(lines), buf.getvalue()


def read_table_csv(text: str) -> List[Dict[str, object]]:
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append({
            "case": row["case"],
            "method": row["method"],
            "producer": row["producer"],
            "rmse": float(row["rmse"]) if row["rmse"] else None,
            "is_best": row["is_best"] == "1",
            "status": row["status"],
        })
    return rows


# --- artifacts ---

def prepare_output_dir(out_dir: Union[str, Path], force: bool = False) -> Path:
    d = Path(out_dir)
    if d.exists() and any(d.iterdir()) and not force:
        raise AppError(
            message=f"output directory {d} is not empty (use --force to overwrite)",
            code=ErrorCode.CONFLICT,
            context={"output_dir": str(d)},
            status_code=409,
        )
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_predictions_csv(data: CaseData, predictions: Dict[str, np.ndarray], path: Path) -> Path:
    """time_days, split, observed q_<id>, then <method>_<id> per method."""
    labels = np.empty(data.panel.n_rows, dtype=object)
    for name in ("train", "validation", "test"):
        rows = getattr(data.split, name)
        labels[rows.start:rows.stop] = name
    header = ["time_days", "split"] + [f"q_{p}" for p in data.panel.producer_ids]
    for method in predictions:
        header += [f"{method}_{p}" for p in data.panel.producer_ids]
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for k in range(data.panel.n_rows):
            row = [repr(float(data.panel.times[k])), labels[k]] + [repr(float(v)) for v in data.panel.q[k]]
            for q_hat in predictions.values():
                row += [repr(float(v)) for v in q_hat[k]]
            writer.writerow(row)
    return path


def read_predictions_csv(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray, Dict[str, np.ndarray], List[str], float]:
    """Returns (times, observed, predictions per method, producer ids, first test time)."""
    with Path(path).open("r", encoding="utf-8-sig", newline="") as f:
        reader = csv.DictReader(f)
        header = list(reader.fieldnames or [])
        rows = list(reader)
    producer_ids = [h[2:] for h in header if h.startswith("q_")]
    times = np.array([float(r["time_days"]) for r in rows])
    observed = np.array([[float(r[f"q_{p}"]) for p in producer_ids] for r in rows])
    methods = [m for m in METHODS if f"{m}_{producer_ids[0]}" in header] if producer_ids else []
    predictions = {m: np.array([[float(r[f"{m}_{p}"]) for p in producer_ids] for r in rows]) for m in methods}
    test_times = [float(r["time_days"]) for r in rows if r["split"] == "test"]
    return times, observed, predictions, producer_ids, test_times[0]


def _matrix_from_payload(payload: ConnectivityPayload, binary: bool):
    cls = AdjacencyMatrix if binary else ConnectivityMatrix
    values = np.asarray(payload.values, dtype=float)
    return cls(values=values.astype(int) if binary else values,
               injector_ids=payload.injector_ids, producer_ids=payload.producer_ids)


def render_case_plots(case_dir: Union[str, Path], case: CaseResult) -> List[Path]:
    """Figures for one case from its predictions_<case>.csv and report connectivity."""
    case_dir = Path(case_dir)
    times, observed, predictions, producer_ids, divider = read_predictions_csv(case_dir / f"predictions_{case.case}.csv")
    matrices = {name: _matrix_from_payload(p, name == "expert_prior") for name, p in case.connectivity.items()}
    return export_plots(case_dir, times, observed, predictions, producer_ids, divider, matrices)


def write_report(run: BenchmarkRun, out_dir: Union[str, Path]) -> List[Path]:
    """
    report.json, report.txt, report.csv at the top level; per case a directory
    with connectivity_<method>.csv, predictions_<case>.csv and the SVG figures.
    """
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    text, table = export_table(run.report)
    written = []
    for name, content in (
        ("report.json", json.dumps(run.report.model_dump(mode="json"), indent=2)),
        ("report.txt", text),
        ("report.csv", table),
    ):
        (d / name).write_text(content)
        written.append(d / name)

    data_by_case = {c.config.name: c for c in run.cases}
    for case in run.report.cases:
        data = data_by_case.get(case.case)
        if data is None:
            continue
        case_dir = d / case.case
        case_dir.mkdir(parents=True, exist_ok=True)
        for name, payload in case.connectivity.items():
            written.append(write_matrix_csv(_matrix_from_payload(payload, name == "expert_prior"),
                                            case_dir / f"connectivity_{name}.csv"))
        written.append(write_predictions_csv(data, run.predictions[case.case], case_dir / f"predictions_{case.case}.csv"))
        written.extend(render_case_plots(case_dir, case))
    logger.info("Wrote %d benchmark artifacts to %s", len(written), d)
    return written


def load_report(out_dir: Union[str, Path]) -> BenchmarkReport:
    return BenchmarkReport.model_validate_json((Path(out_dir) / "report.json").read_text())
