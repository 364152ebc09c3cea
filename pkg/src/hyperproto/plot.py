"""Dependency-free SVG figures: Poincare-disk scatter and density profile."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

CONGEALED_COLOR = "#e0301e"
ORIGINAL_COLOR = "#17becf"


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def disk_svg(features, flags=None, size: int = 480, title: str = "") -> str:
    """Scatter of 2-D ball points inside the unit-circle outline.

    Flagged (congealed) items are drawn as filled red dots on top of the cyan
    originals.  The figure has exactly one ``<circle>`` per feature plus one
    for the outline.
    """
    f = np.asarray(features, dtype=float).reshape(-1, 2)
    flags = np.zeros(len(f), dtype=bool) if flags is None else np.asarray(flags, dtype=bool)
    half = size / 2.0
    radius = half - 10.0
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if title:
        lines.append(f"<title>{escape(title)}</title>")
    lines.append(f'<circle cx="{_fmt(half)}" cy="{_fmt(half)}" r="{_fmt(radius)}" fill="none" stroke="black" '
                 f'stroke-width="1" class="boundary"/>')
    # originals first so the congealed markers stay visible
    for i in np.concatenate([np.flatnonzero(~flags), np.flatnonzero(flags)]):
        x, y = f[i]
        color = CONGEALED_COLOR if flags[i] else ORIGINAL_COLOR
        lines.append(f'<circle cx="{_fmt(half + radius * x)}" cy="{_fmt(half - radius * y)}" r="2" '
                     f'fill="{color}" data-id="{int(i)}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def profile_svg(bins, width: int = 560, height: int = 360, title: str = "") -> str:
    """Line plot of mean density against bin centre, skipping empty bins."""
    pts = [(b[0], b[1]) for b in bins if b[3] > 0 and math.isfinite(b[1])]
    pad = 40.0
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        lines.append(f"<title>{escape(title)}</title>")
    lines.append(f'<path d="M{pad},{pad} V{height - pad} H{width - pad}" fill="none" stroke="black"/>')
    if pts:
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        x_lo, x_span = xs.min(), max(float(np.ptp(xs)), 1e-12)
        y_span = max(float(ys.max()), 1e-300)
        coords = [(pad + (x - x_lo) / x_span * (width - 2 * pad), height - pad - y / y_span * (height - 2 * pad))
                  for x, y in zip(xs, ys)]
        path = " ".join(f"{'M' if k == 0 else 'L'}{_fmt(cx)},{_fmt(cy)}" for k, (cx, cy) in enumerate(coords))
        lines.append(f'<path d="{path}" fill="none" stroke="{CONGEALED_COLOR}" stroke-width="1.5"/>')
        lines.append(f'<text x="{pad}" y="{height - 10}" font-size="11">norm {xs.min():.3f} .. {xs.max():.3f}</text>')
        lines.append(f'<text x="{pad}" y="{pad - 10}" font-size="11">mean density (max {ys.max():.4g})</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
