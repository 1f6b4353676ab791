"""Static SVG scatter plots: three axis-aligned orthographic projections."""

import numpy as np

from .geometry import PointCloud

_COLORS = ("#1f77b4", "#d62728", "#2ca02c")
_PANELS = (("XY", 0, 1), ("XZ", 0, 2), ("YZ", 1, 2))


def write_svg_scatter(clouds, path, labels=None, panel_size=300):
    """Render up to three clouds into one SVG file, one panel per projection."""
    if not 1 <= len(clouds) <= 3:
        raise ValueError(f"expected 1 to 3 clouds, got {len(clouds)}")
    arrays = [c.points if isinstance(c, PointCloud) else np.asarray(c, float) for c in clouds]
    labels = labels or [f"cloud {i}" for i in range(len(arrays))]

    stacked = np.concatenate(arrays)
    lo = stacked.min()
    hi = stacked.max()
    span = hi - lo if hi > lo else 1.0
    pad = 0.05 * span
    lo -= pad
    span += 2 * pad

    margin = 10
    legend_h = 18
    width = 3 * panel_size + 4 * margin
    height = panel_size + 2 * margin + legend_h + 14

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for p, (panel_name, ax, ay) in enumerate(_PANELS):
        x0 = margin + p * (panel_size + margin)
        y0 = margin + legend_h
        parts.append(
            f'<rect x="{x0}" y="{y0}" width="{panel_size}" height="{panel_size}" '
            f'fill="none" stroke="#888" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x0 + panel_size / 2:.1f}" y="{y0 + panel_size + 12}" '
            f'font-family="monospace" font-size="11" text-anchor="middle">{panel_name}</text>'
        )
        for ci, pts in enumerate(arrays):
            px = x0 + (pts[:, ax] - lo) / span * panel_size
            # svg y grows downward
            py = y0 + panel_size - (pts[:, ay] - lo) / span * panel_size
            circles = "".join(
                f'<circle cx="{x:.2f}" cy="{y:.2f}" r="1.5" fill="{_COLORS[ci]}" fill-opacity="0.6"/>'
                for x, y in zip(px, py)
            )
            parts.append(circles)
    for ci, label in enumerate(labels):
        lx = margin + ci * 120
        parts.append(
            f'<rect x="{lx}" y="{margin}" width="10" height="10" fill="{_COLORS[ci]}"/>'
            f'<text x="{lx + 14}" y="{margin + 9}" font-family="monospace" font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
