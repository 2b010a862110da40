"""
Minimal SVG writer used by the plot service.

Elements are appended as text to one standalone document; attribute values
are XML-escaped.
"""

from typing import Dict, Optional, Sequence
from xml.sax.saxutils import quoteattr, escape


def _attrs(attr: Optional[Dict[str, object]]) -> str:
    if not attr:
        return ""
    return " " + " ".join(f"{key}={quoteattr(str(value))}" for key, value in attr.items())


class SVG:
    """Accumulates SVG elements into one standalone document."""

    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.svg = (
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
            f'<svg version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" '
            'xmlns="http://www.w3.org/2000/svg">\n'
        )

    def filled_rectangle(self, x1, y1, x2, y2, fill, extra: Dict[str, object] = None):
        self.svg += (
            f'<rect x="{x1:.2f}" y="{y1:.2f}" width="{x2 - x1:.2f}" height="{y2 - y1:.2f}" '
            f'fill="{fill}"{_attrs(extra)}/>\n'
        )

    def line(self, x1, y1, x2, y2, stroke="#000000", dashed=False, extra: Dict[str, object] = None):
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.svg += (
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{stroke}"{dash}{_attrs(extra)}/>\n'
        )

    def polyline(self, xs: Sequence[float], ys: Sequence[float], stroke: str, extra: Dict[str, object] = None):
        points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        self.svg += f'<polyline points="{points}" fill="none" stroke="{stroke}" stroke-width="1.5"{_attrs(extra)}/>\n'

    def text(self, x, y, string, extra: Dict[str, object] = None):
        self.svg += f'<text x="{x:.2f}" y="{y:.2f}" font-size="12"{_attrs(extra)}>{escape(str(string))}</text>\n'

    def get_svg(self) -> str:
        return f"{self.svg}</svg>\n"
