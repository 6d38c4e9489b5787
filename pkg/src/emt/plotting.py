"""Minimal deterministic SVG plots.

Series are drawn in order with the marker glyphs ``o``, ``+``, ``*`` (then
``x``, ``s``, ``d``), matching the usual country convention England and
Wales (o), Germany (+), Belgium (*). Output is plain text and identical for
identical input.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptyTable
from .ingest import atomic_write_text

GLYPHS = ("o", "+", "*", "x", "s", "d")
COLOURS = ("#1f4e79", "#b22222", "#2e7d32", "#6a1b9a", "#ef6c00", "#37474f")
WIDTH, HEIGHT = 720, 360
MARGIN = dict(left=70, right=140, top=30, bottom=50)


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _glyph(kind: str, x: float, y: float, r: float = 3.5) -> str:
    if kind == "o":
        return f'M{_fmt(x - r)} {_fmt(y)}a{_fmt(r)} {_fmt(r)} 0 1 0 {_fmt(2 * r)} 0a{_fmt(r)} {_fmt(r)} 0 1 0 {_fmt(-2 * r)} 0'
    if kind == "+":
        return f"M{_fmt(x - r)} {_fmt(y)}h{_fmt(2 * r)}M{_fmt(x)} {_fmt(y - r)}v{_fmt(2 * r)}"
    if kind == "*":
        d = r * 0.7071
        return (
            f"M{_fmt(x - r)} {_fmt(y)}h{_fmt(2 * r)}M{_fmt(x)} {_fmt(y - r)}v{_fmt(2 * r)}"
            f"M{_fmt(x - d)} {_fmt(y - d)}l{_fmt(2 * d)} {_fmt(2 * d)}M{_fmt(x - d)} {_fmt(y + d)}l{_fmt(2 * d)} {_fmt(-2 * d)}"
        )
    if kind == "x":
        return f"M{_fmt(x - r)} {_fmt(y - r)}l{_fmt(2 * r)} {_fmt(2 * r)}M{_fmt(x - r)} {_fmt(y + r)}l{_fmt(2 * r)} {_fmt(-2 * r)}"
    if kind == "s":
        return f"M{_fmt(x - r)} {_fmt(y - r)}h{_fmt(2 * r)}v{_fmt(2 * r)}h{_fmt(-2 * r)}z"
    return f"M{_fmt(x)} {_fmt(y - r)}l{_fmt(r)} {_fmt(r)}l{_fmt(-r)} {_fmt(r)}l{_fmt(-r)} {_fmt(-r)}z"


def render_svg(
    table: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    kind: str = "line",
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> str:
    """SVG text for ``table``, a mapping of series name to ``(x, y)``."""
    if kind not in ("line", "points"):
        raise ValueError(f"unknown plot kind {kind!r}")
    series = [(str(k), np.asarray(x, float), np.asarray(y, float)) for k, (x, y) in table.items()]
    series = [s for s in series if len(s[1])]
    if not series:
        raise EmptyTable("nothing to plot")
    xs = np.concatenate([s[1] for s in series])
    ys = np.concatenate([s[2] for s in series])
    fin = np.isfinite(xs) & np.isfinite(ys)
    if not fin.any():
        raise EmptyTable("no finite points to plot")
    x0, x1 = float(xs[fin].min()), float(xs[fin].max())
    y0, y1 = float(ys[fin].min()), float(ys[fin].max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    L, T = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return L + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return T + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<g class="axes" stroke="black" fill="none"><rect x="{L}" y="{T}" width="{pw}" height="{ph}"/></g>',
    ]
    for t in _nice_ticks(x0, x1):
        px = sx(t)
        out.append(f'<line class="tick" x1="{_fmt(px)}" y1="{T + ph}" x2="{_fmt(px)}" y2="{T + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px)}" y="{T + ph + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _nice_ticks(y0, y1):
        py = sy(t)
        out.append(f'<line class="tick" x1="{L - 4}" y1="{_fmt(py)}" x2="{L}" y2="{_fmt(py)}" stroke="black"/>')
        out.append(f'<text x="{L - 6}" y="{_fmt(py + 4)}" text-anchor="end">{_fmt(t)}</text>')
    if title:
        out.append(f'<text x="{L + pw / 2}" y="{T - 10}" text-anchor="middle" font-size="13">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{L + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="15" y="{T + ph / 2}" text-anchor="middle" transform="rotate(-90 15 {T + ph / 2})">{escape(ylabel)}</text>')
    for i, (name, x, y) in enumerate(series):
        glyph = GLYPHS[i % len(GLYPHS)]
        colour = COLOURS[i % len(COLOURS)]
        ok = np.isfinite(x) & np.isfinite(y)
        pts = [(sx(a), sy(b)) for a, b in zip(x[ok], y[ok])]
        out.append(f'<g class="series" data-name="{escape(name)}" data-glyph="{escape(glyph)}" stroke="{colour}" fill="none">')
        if kind == "line":
            coords = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)
            out.append(f'<polyline points="{coords}"/>')
        else:
            for a, b in pts:
                out.append(f'<path class="marker" data-glyph="{escape(glyph)}" d="{_glyph(glyph, a, b)}"/>')
        out.append("</g>")
        ly = T + 14 + 16 * i
        lx = L + pw + 14
        out.append(f'<path class="legend-marker" stroke="{colour}" fill="none" d="{_glyph(glyph, lx, ly)}"/>')
        out.append(f'<text x="{lx + 10}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(table, kind: str, path, **labels) -> None:
    """Render ``table`` and write it to ``path`` atomically."""
    atomic_write_text(path, render_svg(table, kind, **labels))
