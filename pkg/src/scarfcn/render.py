"""Static SVG bull's-eye renderer for per-segment predictions.

Three concentric rings of six sectors, basal outermost, matching the
clinical display convention.  Byte output is deterministic for a fixed
input: all coordinates are formatted with fixed precision.
"""

from __future__ import annotations

import math

import numpy as np

N_SEGMENTS = 18
_SIZE = 400
_CENTER = _SIZE / 2
_RADII = (190.0, 130.0, 70.0, 20.0)  # ring boundaries, basal ring outermost

SCAR_COLOR = "#c0392b"
NO_SCAR_COLOR = "#dfe8ef"


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _sector_path(r_outer: float, r_inner: float, a0: float, a1: float) -> str:
    """Annular sector path between angles a0..a1 (radians, clockwise from 12)."""
    def pt(r, a):
        return (_CENTER + r * math.sin(a), _CENTER - r * math.cos(a))

    x0, y0 = pt(r_outer, a0)
    x1, y1 = pt(r_outer, a1)
    x2, y2 = pt(r_inner, a1)
    x3, y3 = pt(r_inner, a0)
    return (
        f"M {_fmt(x0)} {_fmt(y0)} "
        f"A {_fmt(r_outer)} {_fmt(r_outer)} 0 0 1 {_fmt(x1)} {_fmt(y1)} "
        f"L {_fmt(x2)} {_fmt(y2)} "
        f"A {_fmt(r_inner)} {_fmt(r_inner)} 0 0 0 {_fmt(x3)} {_fmt(y3)} Z"
    )


def render_bullseye(predicted, scores=None) -> str:
    """SVG document for 18 per-segment class values (and optional scores).

    Fill colour encodes predicted class; when scores are given, opacity
    of scarred sectors scales with the score magnitude.
    """
    predicted = np.asarray(predicted)
    if predicted.shape != (N_SEGMENTS,):
        raise ValueError(f"expected 18 segment values, got shape {predicted.shape}")
    if scores is not None:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (N_SEGMENTS,):
            raise ValueError("scores must also hold 18 values")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" '
        f'height="{_SIZE}" viewBox="0 0 {_SIZE} {_SIZE}">',
        f'<rect width="{_SIZE}" height="{_SIZE}" fill="white"/>',
    ]
    step = 2.0 * math.pi / 6.0
    for seg in range(1, N_SEGMENTS + 1):
        ring = (seg - 1) // 6  # 0 basal (outer) .. 2 apical (inner)
        col = (seg - 1) % 6
        a0 = col * step - step / 2.0
        a1 = a0 + step
        path = _sector_path(_RADII[ring], _RADII[ring + 1], a0, a1)
        scarred = int(predicted[seg - 1]) == 1
        fill = SCAR_COLOR if scarred else NO_SCAR_COLOR
        opacity = 1.0
        if scarred and scores is not None:
            opacity = 0.35 + 0.65 * min(abs(float(scores[seg - 1])) / 5.0, 1.0)
        parts.append(
            f'<path d="{path}" fill="{fill}" fill-opacity="{_fmt(opacity)}" '
            f'stroke="#444444" stroke-width="1"/>')
        # segment id label at the sector centroid
        r_mid = 0.5 * (_RADII[ring] + _RADII[ring + 1])
        a_mid = 0.5 * (a0 + a1)
        x = _CENTER + r_mid * math.sin(a_mid)
        y = _CENTER - r_mid * math.cos(a_mid)
        parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="14" '
            f'text-anchor="middle" dominant-baseline="middle" '
            f'fill="#222222">{seg}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
