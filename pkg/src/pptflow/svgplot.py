"""Minimal native SVG line charts (no external renderer)."""

from __future__ import annotations

import numpy as np

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def line_chart(series, title="", xlabel="", ylabel="",
               width=720, height=420):
    """Render named polylines to an SVG string.

    ``series`` is a list of (name, xs, ys) with equal-length numeric
    sequences; at least one point is required overall.
    """
    margin = 60
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    all_x = np.concatenate([np.asarray(xs, dtype=float) for _, xs, _ in series])
    all_y = np.concatenate([np.asarray(ys, dtype=float) for _, _, ys in series])
    if all_x.size == 0:
        raise ValueError("line_chart requires at least one data point")
    x_lo, x_hi = float(all_x.min()), float(all_x.max())
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return height - margin - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2}" y="24" text-anchor="middle" '
            f'font-size="16">{title}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" '
            f'font-size="12">{xlabel}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="16" y="{height / 2}" text-anchor="middle" '
            f'font-size="12" transform="rotate(-90 16 {height / 2})">'
            f"{ylabel}</text>"
        )
    # axis extent labels
    parts.append(
        f'<text x="{margin}" y="{height - margin + 16}" font-size="10">'
        f"{x_lo:g}</text>"
    )
    parts.append(
        f'<text x="{width - margin}" y="{height - margin + 16}" '
        f'text-anchor="end" font-size="10">{x_hi:g}</text>'
    )
    parts.append(
        f'<text x="{margin - 6}" y="{height - margin}" text-anchor="end" '
        f'font-size="10">{y_lo:g}</text>'
    )
    parts.append(
        f'<text x="{margin - 6}" y="{margin + 4}" text-anchor="end" '
        f'font-size="10">{y_hi:g}</text>'
    )
    for i, (name, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        points = " ".join(
            f"{sx(float(x)):.2f},{sy(float(y)):.2f}" for x, y in zip(xs, ys)
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{points}"/>'
        )
        parts.append(
            f'<text x="{width - margin - 4}" y="{margin + 14 + 14 * i}" '
            f'text-anchor="end" font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
