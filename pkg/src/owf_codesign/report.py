"""CSV tables and small self-contained SVG charts."""

from __future__ import annotations

import csv
import math
import numbers
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939")


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def __post_init__(self):
        for row in self.rows:
            self._check(row)

    def _check(self, row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} cells, table has {len(self.columns)} columns")

    def append(self, row):
        self._check(row)
        self.rows.append(list(row))

    def column(self, name) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, numbers.Integral):
        return str(int(v))
    if isinstance(v, numbers.Real):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def emit_csv(table: Table, path) -> Path:
    """Write ``table`` with a header row; reals carry 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_cell(v) for v in row])
    return path


def _parse(s: str):
    for kind in (int, float):
        try:
            return kind(s)
        except ValueError:
            pass
    return {"true": True, "false": False}.get(s, s)


def read_csv(path) -> Table:
    """Inverse of :func:`emit_csv`: numbers come back as int or float."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        return Table(columns, [[_parse(c) for c in row] for row in reader])


@dataclass
class Series:
    label: str
    x: list
    y: list
    kind: str = "line"  # line | scatter | bar
    dashed: bool = False
    axis: str = "left"  # left | right (secondary y axis)


@dataclass
class Pane:
    title: str
    xlabel: str
    ylabel: str
    series: list
    ylabel_right: str = ""


@dataclass
class PlotSpec:
    title: str
    panes: list
    width: int = 720
    pane_height: int = 360


def _ticks(lo, hi, n=5):
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0]
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


def _range(values, include_zero=False):
    vals = [float(v) for v in values if v is not None and math.isfinite(float(v))]
    if include_zero:
        vals.append(0.0)
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-12 * max(1.0, abs(hi)):
        pad = max(abs(hi) * 0.05, 1e-6)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _fmt(v):
    return format(v, ".4g")


def _pane_svg(pane: Pane, x0, y0, w, h, colors):
    left, right, top, bottom = 70, 70 if pane.ylabel_right else 20, 30, 45
    pw, ph = w - left - right, h - top - bottom
    ox, oy = x0 + left, y0 + top
    xs = [v for s in pane.series for v in s.x]
    has_bar = any(s.kind == "bar" for s in pane.series)
    xlo, xhi = _range(xs)
    if has_bar:
        xlo, xhi = min(xs) - 0.6, max(xs) + 0.6
    axes = {}
    for side in ("left", "right"):
        ser = [s for s in pane.series if s.axis == side]
        if ser:
            axes[side] = _range([v for s in ser for v in s.y],
                                include_zero=any(s.kind == "bar" for s in ser))

    def px(v):
        return ox + (float(v) - xlo) / (xhi - xlo) * pw

    def py(v, side="left"):
        lo, hi = axes[side]
        return oy + ph - (float(v) - lo) / (hi - lo) * ph

    out = [f'<g class="pane">',
           f'<text x="{x0 + w / 2:.1f}" y="{y0 + 18}" text-anchor="middle" '
           f'font-size="14">{escape(pane.title)}</text>',
           f'<rect x="{ox}" y="{oy}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for t in _ticks(xlo, xhi):
        out.append(f'<line x1="{px(t):.2f}" y1="{oy + ph}" x2="{px(t):.2f}" '
                   f'y2="{oy + ph + 5}" stroke="#333"/>')
        out.append(f'<text x="{px(t):.2f}" y="{oy + ph + 18}" text-anchor="middle" '
                   f'font-size="11">{_fmt(t)}</text>')
    for side, anchor, dx in (("left", "end", -6), ("right", "start", 6)):
        if side not in axes:
            continue
        edge = ox if side == "left" else ox + pw
        for t in _ticks(*axes[side]):
            out.append(f'<line x1="{edge}" y1="{py(t, side):.2f}" x2="{edge + dx / 1.2:.2f}" '
                       f'y2="{py(t, side):.2f}" stroke="#333"/>')
            out.append(f'<text x="{edge + dx:.2f}" y="{py(t, side) + 4:.2f}" '
                       f'text-anchor="{anchor}" font-size="11">{_fmt(t)}</text>')
    out.append(f'<text x="{ox + pw / 2:.1f}" y="{oy + ph + 36}" text-anchor="middle" '
               f'font-size="12">{escape(pane.xlabel)}</text>')
    out.append(f'<text transform="translate({x0 + 16},{oy + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle" font-size="12">{escape(pane.ylabel)}</text>')
    if pane.ylabel_right:
        out.append(f'<text transform="translate({x0 + w - 12},{oy + ph / 2:.1f}) rotate(90)" '
                   f'text-anchor="middle" font-size="12">{escape(pane.ylabel_right)}</text>')

    bars = [s for s in pane.series if s.kind == "bar"]
    bar_w = 0.8 / max(len(bars), 1)
    for k, s in enumerate(pane.series):
        color = next(colors)
        pts = [(px(a), py(b, s.axis)) for a, b in zip(s.x, s.y)
               if b is not None and math.isfinite(float(b))]
        if s.kind == "bar":
            j = bars.index(s)
            base = py(0.0, s.axis)
            for a, b in zip(s.x, s.y):
                xl = px(float(a) - 0.4 + j * bar_w)
                xr = px(float(a) - 0.4 + (j + 1) * bar_w)
                yv = py(b, s.axis)
                out.append(f'<rect x="{xl:.2f}" y="{min(yv, base):.2f}" '
                           f'width="{xr - xl:.2f}" height="{abs(base - yv):.2f}" '
                           f'fill="{color}" fill-opacity="0.7"/>')
        elif s.kind == "scatter":
            for a, b in pts:
                out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>')
        else:
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                       f'stroke-width="1.6"{dash}/>')
            for a, b in pts:
                out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2" fill="{color}"/>')
        ly = oy + 14 + 15 * k
        out.append(f'<rect x="{ox + pw - 150}" y="{ly - 9}" width="10" height="10" '
                   f'fill="{color}"/>')
        out.append(f'<text x="{ox + pw - 135}" y="{ly}" font-size="11">'
                   f'{escape(s.label)}</text>')
    out.append("</g>")
    return out


def render_svg(spec: PlotSpec) -> str:
    h = 40 + spec.pane_height * len(spec.panes)
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" '
             f'height="{h}" viewBox="0 0 {spec.width} {h}" font-family="sans-serif">',
             f'<rect width="{spec.width}" height="{h}" fill="white"/>',
             f'<text x="{spec.width / 2}" y="24" text-anchor="middle" font-size="16">'
             f'{escape(spec.title)}</text>']
    for k, pane in enumerate(spec.panes):
        colors = iter(PALETTE * (1 + len(pane.series) // len(PALETTE)))
        lines += _pane_svg(pane, 0, 40 + k * spec.pane_height, spec.width,
                           spec.pane_height, colors)
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_svg(spec: PlotSpec, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_svg(spec))
    return path
