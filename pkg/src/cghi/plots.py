"""Static SVG plots of HI curves with a LOESS overlay, written by hand."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .metrics import DEFAULT_SPAN, HISeries, loess_smooth

WIDTH, HEIGHT = 640, 400
MARGIN = 50
SEED_COLORS = ("#4c72b0", "#55a868", "#8172b2", "#ccb974", "#64b5cd", "#8c8c8c")


def _polyline(x: np.ndarray, y: np.ndarray, color: str, width: float, opacity: float = 1.0) -> str:
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(x, y))
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
            f'stroke-opacity="{opacity}" points="{pts}"/>')


def hi_curve_svg(series: Sequence[HISeries], title: str, span: float = DEFAULT_SPAN) -> str:
    """HI versus time for every seed of one run, plus the LOESS fit of the seed mean in red."""
    if not series:
        raise ValueError("nothing to plot")
    t = series[0].times
    allv = np.concatenate([s.values for s in series])
    lo, hi = float(allv.min()), float(allv.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    t0, t1 = float(t.min()), float(t.max())
    t1 = t1 if t1 > t0 else t0 + 1.0
    sx = lambda v: MARGIN + (np.asarray(v) - t0) / (t1 - t0) * (WIDTH - 2 * MARGIN)
    sy = lambda v: HEIGHT - MARGIN - (np.asarray(v) - lo) / (hi - lo) * (HEIGHT - 2 * MARGIN)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">time (s)</text>',
           f'<text x="14" y="{HEIGHT / 2}" font-size="12" transform="rotate(-90 14 {HEIGHT / 2})" '
           f'text-anchor="middle">HI</text>']
    for v, label in ((lo, f"{lo:.3g}"), (hi, f"{hi:.3g}")):
        out.append(f'<text x="{MARGIN - 4}" y="{float(sy(v)) + 4:.2f}" text-anchor="end" font-size="10">{label}</text>')
    for v, label in ((t0, f"{t0:.0f}"), (t1, f"{t1:.0f}")):
        out.append(f'<text x="{float(sx(v)):.2f}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle" '
                   f'font-size="10">{label}</text>')
    for k, s in enumerate(series):
        out.append(_polyline(sx(s.times), sy(s.values), SEED_COLORS[k % len(SEED_COLORS)], 1.0, 0.6))
    if len(t) >= 4:
        mean = np.mean([s.values for s in series], axis=0)
        out.append(_polyline(sx(t), sy(loess_smooth(mean, span, times=t)), "red", 2.0))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_hi_plots(directory: str | Path, series: Sequence[HISeries], span: float = DEFAULT_SPAN) -> list[Path]:
    """One SVG per run, named after the run id."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    by_run: dict[str, list[HISeries]] = {}
    for s in series:
        by_run.setdefault(s.run_id, []).append(s)
    paths = []
    for run_id in sorted(by_run):
        group = sorted(by_run[run_id], key=lambda s: s.seed)
        p = directory / f"{run_id}.svg"
        p.write_text(hi_curve_svg(group, f"{run_id} (seeds: {len(group)})", span), encoding="utf-8")
        paths.append(p)
    return paths
