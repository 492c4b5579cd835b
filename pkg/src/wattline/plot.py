"""Deterministic log-log SVG rendering of a power roofline model.

No plotting library: the output must be byte-identical across runs and
machines, so coordinates are formatted with a fixed precision and the
document is assembled in a fixed order.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence
from xml.sax.saxutils import escape, quoteattr

from .errors import PlotError
from .model import GIGA, Kind, MeasurementRecord, Precision, RooflineModel, derive_metrics, ridge_point

WIDTH, HEIGHT = 760, 500
LEFT, RIGHT, TOP, BOTTOM = 80, 40, 40, 60
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _c(v: float) -> str:
    return f"{v:.3f}"


def _label_num(v: float) -> str:
    return f"{v:g}"


def kernel_points(model: RooflineModel, records: Iterable[MeasurementRecord]) -> list[tuple[str, float, float]]:
    """(label, energy per unit in display units, watts) for each record."""
    points = []
    for r in records:
        if r.precision is not model.precision and Precision.NA not in (r.precision, model.precision):
            raise PlotError(f"{r.kernel_name}/{r.config_label} is {r.precision.value}, model is {model.precision.value}")
        m = derive_metrics(r)
        e = m.e_w if model.kind is Kind.COMPUTE else m.e_q
        if e is None:
            need = "W" if model.kind is Kind.COMPUTE else "Q"
            raise PlotError(f"{r.kernel_name}/{r.config_label} has no {need}; it cannot go on a {model.kind.value} model")
        label = f"{r.kernel_name} ({r.config_label})" if r.config_label else r.kernel_name
        points.append((label, e * GIGA, m.P))
    return points


def render_svg(model: RooflineModel, records: Sequence[MeasurementRecord] = ()) -> str:
    points = kernel_points(model, records)
    ridges = [ridge_point(model.p_peak, c.rate) * GIGA for c in model.ceilings]
    x_lo = min(ridges) / 10
    x_hi = max(ridges + [p[1] for p in points]) * 10

    starts = [c.rate / GIGA * x_lo for c in model.ceilings]
    y_lo = min(starts + [p[2] for p in points])
    y_hi = max([model.p_peak] + [p[2] for p in points])
    y_min = 10.0 ** math.floor(math.log10(y_lo))
    y_max = 10.0 ** math.ceil(math.log10(y_hi * 1.2))

    lx0, lx1 = math.log10(x_lo), math.log10(x_hi)
    ly0, ly1 = math.log10(y_min), math.log10(y_max)
    plot_w = WIDTH - LEFT - RIGHT
    plot_h = HEIGHT - TOP - BOTTOM

    def sx(x: float) -> float:
        return LEFT + (math.log10(x) - lx0) / (lx1 - lx0) * plot_w

    def sy(y: float) -> float:
        return TOP + plot_h - (math.log10(y) - ly0) / (ly1 - ly0) * plot_h

    if model.kind is Kind.COMPUTE:
        x_title, rate_unit = "Energy per operation (J/GFLOP)", "GFLOP/s"
    else:
        x_title, rate_unit = "Energy per byte (J/GB)", "GB/s"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        "<style>text { font-family: sans-serif; font-size: 11px; }</style>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    title = f"{model.platform}: {model.kind.value} roofline, {model.precision.value} precision"
    out.append(f'<text class="title" x="{WIDTH / 2:.3f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')

    # axes
    bx0, by0 = LEFT, TOP + plot_h
    out.append(f'<line class="axis" x1="{bx0}" y1="{by0}" x2="{LEFT + plot_w}" y2="{by0}" stroke="black"/>')
    out.append(f'<line class="axis" x1="{bx0}" y1="{TOP}" x2="{bx0}" y2="{by0}" stroke="black"/>')
    for d in range(math.ceil(lx0 - 1e-9), math.floor(lx1 + 1e-9) + 1):
        x = sx(10.0**d)
        out.append(f'<line class="tick" x1="{_c(x)}" y1="{by0}" x2="{_c(x)}" y2="{by0 + 5}" stroke="black"/>')
        out.append(f'<text x="{_c(x)}" y="{by0 + 18}" text-anchor="middle">{_label_num(10.0**d)}</text>')
    for d in range(round(ly0), round(ly1) + 1):
        y = sy(10.0**d)
        out.append(f'<line class="tick" x1="{bx0 - 5}" y1="{_c(y)}" x2="{bx0}" y2="{_c(y)}" stroke="black"/>')
        out.append(f'<text x="{bx0 - 8}" y="{_c(y + 4)}" text-anchor="end">{_label_num(10.0**d)}</text>')
    out.append(f'<text x="{LEFT + plot_w / 2:.3f}" y="{HEIGHT - 15}" text-anchor="middle">{x_title}</text>')
    out.append(
        f'<text x="18" y="{TOP + plot_h / 2:.3f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {TOP + plot_h / 2:.3f})">Power (W)</text>'
    )

    # roof from the leftmost ridge to the right edge
    roof_y = _c(sy(model.p_peak))
    out.append(
        f'<line class="roof" x1="{_c(sx(min(ridges)))}" y1="{roof_y}" x2="{_c(sx(x_hi))}" y2="{roof_y}" '
        f'stroke="black" stroke-width="2"/>'
    )
    out.append(
        f'<text x="{_c(sx(x_hi) - 4)}" y="{_c(sy(model.p_peak) - 6)}" text-anchor="end">'
        f"P_peak = {_label_num(model.p_peak)} W</text>"
    )

    for i, (c, ridge) in enumerate(zip(model.ceilings, ridges)):
        color = PALETTE[i % len(PALETTE)]
        x0, y0 = _c(sx(x_lo)), _c(sy(c.rate / GIGA * x_lo))
        x1 = _c(sx(ridge))
        out.append(
            f'<polyline class="ceiling" data-name={quoteattr(c.name)} data-ridge="{ridge:.6e}" '
            f'points="{x0},{y0} {x1},{roof_y}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        label = f"{c.name} ({c.rate / GIGA:.1f} {rate_unit})"
        out.append(
            f'<text class="ceiling-label" x="{_c(sx(ridge) + 4)}" y="{_c(sy(model.p_peak) + 14 + 12 * i)}" '
            f'fill="{color}">{escape(label)}</text>'
        )

    for label, e, p in points:
        x, y = _c(sx(e)), _c(sy(p))
        out.append(f'<circle class="kernel" data-name={quoteattr(label)} cx="{x}" cy="{y}" r="4" fill="black"/>')
        out.append(f'<text class="kernel-label" x="{_c(sx(e) + 6)}" y="{_c(sy(p) - 6)}">{escape(label)}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"


def save_svg(model: RooflineModel, path, records: Sequence[MeasurementRecord] = ()) -> None:
    svg = render_svg(model, records)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(svg)
