"""
Plot Service

Self-contained SVG figures: per-producer rate histories with the train/test
divider, and connectivity heatmaps.
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

import numpy as np

from ..domain import AdjacencyMatrix, ConnectivityMatrix
from ..utils.svg_builder import SVG

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 720, 400
MARGIN = 50
OBSERVED_COLOR = "#d62728"
SERIES_COLORS = ["#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
LOW_RGB = np.array([255.0, 255.0, 255.0])
HIGH_RGB = np.array([8.0, 48.0, 107.0])


def shade(value: float, vmin: float = 0.0, vmax: float = 1.0) -> str:
    """White-to-blue fill; darker for larger values."""
    span = vmax - vmin
    frac = 0.0 if span <= 0 else float(np.clip((value - vmin) / span, 0.0, 1.0))
    rgb = np.rint(LOW_RGB + frac * (HIGH_RGB - LOW_RGB)).astype(int)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def producer_plot(
    producer_id: str,
    times: Sequence[float],
    observed: Sequence[float],
    predictions: Mapping[str, Sequence[float]],
    divider_time: float,
) -> str:
    times = np.asarray(times, dtype=float)
    series = {"observed": np.asarray(observed, dtype=float)}
    series.update({name: np.asarray(v, dtype=float) for name, v in predictions.items()})

    t0, t1 = float(times.min()), float(times.max())
    lo = min(float(np.min(v)) for v in series.values())
    hi = max(float(np.max(v)) for v in series.values())
    if hi <= lo:
        hi = lo + 1.0
    if t1 <= t0:
        t1 = t0 + 1.0

    def sx(t):
        return MARGIN + (np.asarray(t) - t0) / (t1 - t0) * (WIDTH - 2 * MARGIN)

    def sy(v):
        return HEIGHT - MARGIN - (np.asarray(v) - lo) / (hi - lo) * (HEIGHT - 2 * MARGIN)

    svg = SVG(WIDTH, HEIGHT)
    svg.text(MARGIN, MARGIN / 2, f"{producer_id} rate (bbl/day)")
    svg.line(MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN)
    svg.line(MARGIN, MARGIN, MARGIN, HEIGHT - MARGIN)
    for k, (name, values) in enumerate(series.items()):
        color = OBSERVED_COLOR if name == "observed" else SERIES_COLORS[(k - 1) % len(SERIES_COLORS)]
        svg.polyline(sx(times), sy(values), color, extra={"data-series": name})
        svg.text(WIDTH - MARGIN - 140, MARGIN + 14 * k, name, extra={"fill": color})
    x = float(sx(divider_time))
    svg.line(x, MARGIN, x, HEIGHT - MARGIN, stroke="#555555", dashed=True,
             extra={"class": "divider", "data-time": repr(float(divider_time))})
    return svg.get_svg()


def connectivity_heatmap(matrix: Union[ConnectivityMatrix, AdjacencyMatrix], title: str) -> str:
    """Rows are injectors, columns producers; shades span [0, 1]."""
    values = np.asarray(matrix.values, dtype=float)
    n_i, n_p = values.shape
    cell = min((WIDTH - 2 * MARGIN) / n_p, (HEIGHT - 2 * MARGIN) / n_i)

    svg = SVG(WIDTH, HEIGHT)
    svg.text(MARGIN, MARGIN / 2, title)
    for j, pid in enumerate(matrix.producer_ids):
        svg.text(MARGIN + (j + 0.3) * cell, MARGIN - 6, pid)
    for i, iid in enumerate(matrix.injector_ids):
        svg.text(4, MARGIN + (i + 0.5) * cell, iid)
        for j in range(n_p):
            x, y = MARGIN + j * cell, MARGIN + i * cell
            svg.filled_rectangle(
                x, y, x + cell, y + cell, shade(values[i, j]),
                extra={"class": "cell", "data-row": i, "data-col": j, "data-value": repr(float(values[i, j]))},
            )
    return svg.get_svg()


def export_plots(
    out_dir: Union[str, Path],
    times: Sequence[float],
    observed: np.ndarray,
    predictions: Mapping[str, np.ndarray],
    producer_ids: Sequence[str],
    divider_time: float,
    connectivity: Mapping[str, Union[ConnectivityMatrix, AdjacencyMatrix]] = None,
) -> List[Path]:
    """One producer_<id>.svg per producer plus connectivity_<method>.svg per matrix."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    observed = np.asarray(observed, dtype=float)
    for j, pid in enumerate(producer_ids):
        per_method: Dict[str, np.ndarray] = {name: np.asarray(v)[:, j] for name, v in predictions.items()}
        path = d / f"producer_{pid}.svg"
        path.write_text(producer_plot(pid, times, observed[:, j], per_method, divider_time))
        written.append(path)
    for name, matrix in (connectivity or {}).items():
        path = d / f"connectivity_{name}.svg"
        path.write_text(connectivity_heatmap(matrix, name))
        written.append(path)
    logger.info("Wrote %d figures to %s", len(written), d)
    return written
