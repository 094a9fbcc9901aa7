"""Deterministic SVG 1.1 rendering of planar partitions."""
from __future__ import annotations

from typing import Optional

import numpy as np

# fixed qualitative palette; cells cycle through it by pattern hash
PALETTE = ("#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
           "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac")
CLASS_PALETTE = ("#a6cee3", "#fdbf6f", "#b2df8a", "#fb9a99", "#cab2d6", "#ffff99", "#1f78b4", "#ff7f00")


def _xy(p, lo, scale, size):
    # flip y so the picture has the usual orientation
    return f"{(p[0] - lo[0]) * scale:.6f},{size - (p[1] - lo[1]) * scale:.6f}"


def partition_svg(polygons, window, fills=None, boundary=None, manifest: Optional[str] = None,
                  size: int = 600, stroke: str = "#333333") -> str:
    """SVG of window-clipped polygons.

    ``fills`` gives one colour per polygon (default: palette by index);
    ``boundary`` is a list of ``(p, q)`` segments drawn on top.
    """
    lo = np.asarray(window.center, float) - window.r
    scale = size / (2 * window.r)
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">']
    if manifest is not None:
        out.append(f"<!-- manifest: {manifest} -->")
    out.append(f'<rect x="0" y="0" width="{size}" height="{size}" fill="#ffffff"/>')
    out.append(f'<g stroke="{stroke}" stroke-width="0.3" stroke-linejoin="round">')
    for i, poly in enumerate(polygons):
        fill = fills[i] if fills is not None else PALETTE[i % len(PALETTE)]
        pts = " ".join(_xy(p, lo, scale, size) for p in poly)
        out.append(f'<polygon points="{pts}" fill="{fill}"/>')
    out.append("</g>")
    if boundary:
        out.append('<g stroke="#000000" stroke-width="1.6" stroke-linecap="round">')
        for p, q in boundary:
            a, b = _xy(p, lo, scale, size).split(","), _xy(q, lo, scale, size).split(",")
            out.append(f'<line x1="{a[0]}" y1="{a[1]}" x2="{b[0]}" y2="{b[1]}"/>')
        out.append("</g>")
    out.append(f'<rect x="0" y="0" width="{size}" height="{size}" fill="none" stroke="#000000" stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cells_svg(cells, window, manifest: Optional[str] = None, size: int = 600) -> str:
    fills = [PALETTE[int(c.pattern_hash, 16) % len(PALETTE)] for c in cells]
    return partition_svg([c.polygon for c in cells], window, fills, manifest=manifest, size=size)


def decision_svg(dmap, window, manifest: Optional[str] = None, size: int = 600) -> str:
    polys = [p for p, _, _ in dmap.subcells]
    fills = [CLASS_PALETTE[lab % len(CLASS_PALETTE)] for _, lab, _ in dmap.subcells]
    segs = [(p, q) for p, q, _, _ in dmap.boundary]
    return partition_svg(polys, window, fills, segs, manifest=manifest, size=size)
