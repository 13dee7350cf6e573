"""Minimal hand-rolled SVG line plots.

The harness only needs two figures (a log-log convergence plot and a
track-versus-reference overlay), so this sticks to polylines, markers,
ticks and a legend.  Output is deterministic: fixed header, fixed float
formatting, no timestamps or library version strings.
"""

from __future__ import annotations

import math
from pathlib import Path

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 72, "right": 24, "top": 40, "bottom": 52}
PALETTE = ["#1f6f8b", "#c85428", "#5a8f29", "#7b4fa6", "#a8233d", "#3f3f3f"]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    lo_e = math.floor(math.log10(lo))
    hi_e = math.ceil(math.log10(hi))
    return [10.0 ** e for e in range(lo_e, hi_e + 1)]


class _Axis:
    def __init__(self, lo: float, hi: float, pix_lo: float, pix_hi: float,
                 log: bool):
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi - lo < 1e-300:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi = lo, hi
        self.pix_lo, self.pix_hi = pix_lo, pix_hi
        self.log = log

    def __call__(self, x: float) -> float:
        v = math.log10(x) if self.log else x
        f = (v - self.lo) / (self.hi - self.lo)
        return self.pix_lo + f * (self.pix_hi - self.pix_lo)


def line_plot(path, series, *, title: str, xlabel: str, ylabel: str,
              logx: bool = False, logy: bool = False) -> None:
    """Write a line plot.

    series: list of (label, xs, ys) triples.  Log axes drop non-positive
    values from range computation; points at or below zero are skipped on
    a log axis.
    """
    def keep(x, y):
        return (not logx or x > 0.0) and (not logy or y > 0.0)

    flat = [(x, y) for _, xs, ys in series
            for x, y in zip(xs, ys) if keep(float(x), float(y))]
    if not flat:
        flat = [(1.0, 1.0)]
    xs_all = [p[0] for p in flat]
    ys_all = [p[1] for p in flat]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if not logx:
        pad = 0.06 * (x_hi - x_lo or 1.0)
        x_lo, x_hi = x_lo - pad, x_hi + pad
    if not logy:
        pad = 0.08 * (y_hi - y_lo or 1.0)
        y_lo, y_hi = y_lo - pad, y_hi + pad

    ax = _Axis(x_lo, x_hi, MARGIN["left"], WIDTH - MARGIN["right"], logx)
    ay = _Axis(y_lo, y_hi, HEIGHT - MARGIN["bottom"], MARGIN["top"], logy)

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
    out.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>')
    out.append(
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>')

    x_ticks = _log_ticks(10 ** ax.lo, 10 ** ax.hi) if logx else _nice_ticks(ax.lo, ax.hi)
    y_ticks = _log_ticks(10 ** ay.lo, 10 ** ay.hi) if logy else _nice_ticks(ay.lo, ay.hi)
    grid, labels = [], []
    for t in x_ticks:
        px = ax(t)
        if not (MARGIN["left"] - 0.5 <= px <= WIDTH - MARGIN["right"] + 0.5):
            continue
        grid.append(f'<line x1="{_fmt(px)}" y1="{MARGIN["top"]}" x2="{_fmt(px)}" '
                    f'y2="{HEIGHT - MARGIN["bottom"]}" stroke="#dddddd"/>')
        labels.append(f'<text x="{_fmt(px)}" y="{HEIGHT - MARGIN["bottom"] + 18}" '
                      f'text-anchor="middle" font-family="sans-serif" '
                      f'font-size="11">{_fmt(t)}</text>')
    for t in y_ticks:
        py = ay(t)
        if not (MARGIN["top"] - 0.5 <= py <= HEIGHT - MARGIN["bottom"] + 0.5):
            continue
        grid.append(f'<line x1="{MARGIN["left"]}" y1="{_fmt(py)}" '
                    f'x2="{WIDTH - MARGIN["right"]}" y2="{_fmt(py)}" '
                    f'stroke="#dddddd"/>')
        labels.append(f'<text x="{MARGIN["left"] - 8}" y="{_fmt(py + 4)}" '
                      f'text-anchor="end" font-family="sans-serif" '
                      f'font-size="11">{_fmt(t)}</text>')
    out.extend(grid)
    out.append(f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" '
               f'width="{WIDTH - MARGIN["left"] - MARGIN["right"]}" '
               f'height="{HEIGHT - MARGIN["top"] - MARGIN["bottom"]}" '
               f'fill="none" stroke="#333333"/>')
    out.extend(labels)
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 14}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">{xlabel}</text>')
    out.append(f'<text x="20" y="{HEIGHT / 2}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 20 {HEIGHT / 2})">{ylabel}</text>')

    for k, (label, xs, ys) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        pts = [(ax(float(x)), ay(float(y)))
               for x, y in zip(xs, ys) if keep(float(x), float(y))]
        if len(pts) >= 2:
            d = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
            out.append(f'<polyline points="{d}" fill="none" stroke="{color}" '
                       f'stroke-width="1.6"/>')
        for px, py in pts:
            out.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="3" '
                       f'fill="{color}"/>')

    ly = MARGIN["top"] + 10
    for k, (label, _, _) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<line x1="{WIDTH - MARGIN["right"] - 130}" y1="{ly}" '
                   f'x2="{WIDTH - MARGIN["right"] - 106}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - MARGIN["right"] - 100}" y="{ly + 4}" '
                   f'font-family="sans-serif" font-size="11">{label}</text>')
        ly += 16

    out.append("</svg>\n")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out))
