"""Minimal SVG line plots, generated as plain markup.

Good enough for eyeballing training curves and spectra; anything
quantitative should read the CSV files instead. Output contains no
timestamps, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import math

__all__ = ["line_plot"]

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 28, 44
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _transform(lo: float, hi: float, log: bool):
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    span = (hi - lo) or 1.0

    def to_unit(v: float) -> float:
        v = math.log10(v) if log else v
        return (v - lo) / span

    return to_unit, lo, hi


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        lo_e = math.floor(math.log10(lo))
        hi_e = math.ceil(math.log10(hi))
        step = max(1, (hi_e - lo_e) // 6)
        return [10.0**e for e in range(lo_e, hi_e + 1, step)]
    span = (hi - lo) or 1.0
    step = 10 * *math.floor(math.log10(span / 4)) if span > 0 else 1.0
    step = 10 ** math.floor(math.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12 * span:
        out.append(v)
        v += step
    return out


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


def line_plot(
    series: list[tuple[str, list[float], list[float]]],
    path,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    log_x: bool = False,
    log_y: bool = False,
) -> None:
    """Write one SVG with one polyline per (label, xs, ys) series."""
    pts = [
        (x, y)
        for _, xs, ys in series
        for x, y in zip(xs, ys)
        if math.isfinite(x) and math.isfinite(y)
        and (not log_x or x > 0) and (not log_y or y > 0)
    ]
    if not pts:
        raise ValueError("nothing finite to plot")
    x_lo, x_hi = min(p[0] for p in pts), max(p[0] for p in pts)
    y_lo, y_hi = min(p[1] for p in pts), max(p[1] for p in pts)
    tx, _, _ = _transform(x_lo, x_hi, log_x)
    ty, _, _ = _transform(y_lo, y_hi, log_y)
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        return MARGIN_L + tx(x) * plot_w

    def py(y: float) -> float:
        return HEIGHT - MARGIN_B - ty(y) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#444"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" '
            f'font-size="14">{title}</text>'
        )
    for v in _ticks(x_lo, x_hi, log_x):
        if x_lo <= v <= x_hi or log_x:
            x = px(v)
            if MARGIN_L - 1 <= x <= WIDTH - MARGIN_R + 1:
                parts.append(
                    f'<line x1="{x:.1f}" y1="{HEIGHT - MARGIN_B}" x2="{x:.1f}" '
                    f'y2="{HEIGHT - MARGIN_B + 4}" stroke="#444"/>'
                )
                parts.append(
                    f'<text x="{x:.1f}" y="{HEIGHT - MARGIN_B + 16}" '
                    f'text-anchor="middle">{_fmt(v)}</text>'
                )
    for v in _ticks(y_lo, y_hi, log_y):
        y = py(v)
        if MARGIN_T - 1 <= y <= HEIGHT - MARGIN_B + 1:
            parts.append(
                f'<line x1="{MARGIN_L - 4}" y1="{y:.1f}" x2="{MARGIN_L}" '
                f'y2="{y:.1f}" stroke="#444"/>'
            )
            parts.append(
                f'<text x="{MARGIN_L - 7}" y="{y + 4:.1f}" text-anchor="end">{_fmt(v)}</text>'
            )
    if x_label:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">{x_label}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="14" y="{HEIGHT / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {HEIGHT / 2:.1f})">{y_label}</text>'
        )
    for k, (label, xs, ys) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        coords = [
            f"{px(x):.2f},{py(y):.2f}"
            for x, y in zip(xs, ys)
            if math.isfinite(x) and math.isfinite(y)
            and (not log_x or x > 0) and (not log_y or y > 0)
        ]
        if not coords:
            continue
        parts.append(
            f'<polyline points="{" ".join(coords)}" fill="none" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
        ly = MARGIN_T + 16 + 16 * k
        parts.append(
            f'<line x1="{WIDTH - MARGIN_R - 150}" y1="{ly - 4}" '
            f'x2="{WIDTH - MARGIN_R - 130}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{WIDTH - MARGIN_R - 124}" y="{ly}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
