"""Tiny self-contained SVG renderers (no plotting dependency): a rect-grid
heatmap with an embedded color scale, and a labeled scatter plot."""

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
           "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")


def _hex(r, g, b):
    return "#%02x%02x%02x" % (int(round(r)), int(round(g)), int(round(b)))


def diverging_color(t):
    """t in [-1, 1]: blue -> white -> red."""
    t = max(-1.0, min(1.0, t))
    if t < 0:
        f = 1.0 + t
        return _hex(49 + f * (255 - 49), 54 + f * (255 - 54), 149 + f * (255 - 149))
    f = 1.0 - t
    return _hex(165 + f * (255 - 165), 0 + f * 255, 38 + f * (255 - 38))


def sequential_color(t):
    """t in [0, 1]: near-white -> dark blue."""
    t = max(0.0, min(1.0, t))
    return _hex(247 - t * (247 - 8), 251 - t * (251 - 48), 255 - t * (255 - 107))


def _color_scale(x, y, height, vmin, vmax, diverging):
    rows = ["<g>"]
    steps = 40
    for i in range(steps):
        t = 1.0 - i / (steps - 1)
        color = diverging_color(2 * t - 1) if diverging else sequential_color(t)
        rows.append(
            f'<rect x="{x}" y="{y + i * height / steps:.2f}" width="14" '
            f'height="{height / steps + 0.5:.2f}" fill="{color}"/>')
    rows.append(f'<text x="{x + 18}" y="{y + 10}" font-size="11">{vmax:.3g}</text>')
    rows.append(f'<text x="{x + 18}" y="{y + height}" font-size="11">{vmin:.3g}</text>')
    rows.append("</g>")
    return rows


def svg_heatmap(grid, title="", diverging=False, cell=14):
    """Render a (rows, cols) value grid; row 0 is drawn at the bottom.

    Diverging grids are centered at zero (blue negative, red positive)."""
    grid = np.asarray(grid, dtype=float)
    n_rows, n_cols = grid.shape
    vmin, vmax = float(grid.min()), float(grid.max())
    margin, legend = 28, 70
    width = n_cols * cell + margin * 2 + legend
    height = n_rows * cell + margin * 2
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        parts.append(f'<text x="{margin}" y="16" font-size="12">{title}</text>')
    if diverging:
        scale = max(abs(vmin), abs(vmax), 1e-12)
    for i in range(n_rows):
        for j in range(n_cols):
            v = grid[i, j]
            if diverging:
                color = diverging_color(v / scale)
            else:
                span = (vmax - vmin) or 1.0
                color = sequential_color((v - vmin) / span)
            x = margin + j * cell
            y = margin + (n_rows - 1 - i) * cell
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" '
                         f'height="{cell}" fill="{color}"/>')
    lo, hi = (-scale, scale) if diverging else (vmin, vmax)
    parts.extend(_color_scale(margin + n_cols * cell + 12, margin,
                              n_rows * cell, lo, hi, diverging))
    parts.append("</svg>")
    return "\n".join(parts)


def svg_scatter(points, labels=None, title="", size=360):
    """Scatter of 2-D points, colored by integer label when given."""
    points = np.asarray(points, dtype=float)
    margin = 36
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.where(hi - lo < 1e-12, 1.0, hi - lo)

    def sx(v):
        return margin + (v - lo[0]) / span[0] * (size - 2 * margin)

    def sy(v):
        return size - margin - (v - lo[1]) / span[1] * (size - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>',
             f'<rect x="{margin}" y="{margin}" width="{size - 2 * margin}" '
             f'height="{size - 2 * margin}" fill="none" stroke="#888"/>']
    if title:
        parts.append(f'<text x="{margin}" y="20" font-size="12">{title}</text>')
    for i, (x, y) in enumerate(points):
        if labels is None or labels[i] is None:
            color = PALETTE[0]
        else:
            color = PALETTE[int(labels[i]) % len(PALETTE)]
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" '
                     f'fill="{color}" fill-opacity="0.7"/>')
    if labels is not None:
        seen = sorted({int(l) for l in labels if l is not None})
        for rank, lab in enumerate(seen):
            y = margin + 14 * rank + 10
            parts.append(f'<circle cx="{size - margin - 34}" cy="{y}" r="4" '
                         f'fill="{PALETTE[lab % len(PALETTE)]}"/>')
            parts.append(f'<text x="{size - margin - 26}" y="{y + 4}" '
                         f'font-size="11">{lab}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
