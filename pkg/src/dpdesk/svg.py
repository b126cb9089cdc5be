"""Minimal self-contained SVG line charts (no runtime plotting deps).

Only what the reports need: a log-x axis with an optional "infinity" slot at
the right edge, a fixed [0, 1] y axis for score curves, polyline series and
a legend.
"""

from __future__ import annotations

import math

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

W, H = 640, 400
MARGIN = {"left": 60, "right": 150, "top": 30, "bottom": 50}


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def line_chart(series, x_ticks, title="", xlabel="", ylabel="",
               y_range=(0.0, 1.0)) -> str:
    """Render polyline series against pre-positioned x ticks.

    series: [(name, [(xpos, y), ...]), ...] where xpos is in arbitrary axis
    units (callers apply their own log/infinity positioning).
    x_ticks: [(xpos, label), ...]; the tick span defines the x viewport.
    """
    if not x_ticks:
        raise ValueError("need at least one x tick")
    xs = [p for p, _ in x_ticks]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_lo, y_hi = y_range

    px_w = W - MARGIN["left"] - MARGIN["right"]
    px_h = H - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x_lo) / (x_hi - x_lo) * px_w

    def sy(y):
        return MARGIN["top"] + (y_hi - y) / (y_hi - y_lo) * px_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{W / 2}" y="18" text-anchor="middle" '
            f'font-size="14">{_esc(title)}</text>'
        )

    ax = 'stroke="#333" stroke-width="1"'
    x0, y0 = MARGIN["left"], MARGIN["top"] + px_h
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + px_w}" y2="{y0}" {ax}/>')
    parts.append(f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" {ax}/>')

    for xpos, label in x_ticks:
        px = sx(xpos)
        parts.append(f'<line x1="{px}" y1="{y0}" x2="{px}" y2="{y0 + 5}" {ax}/>')
        parts.append(
            f'<text x="{px}" y="{y0 + 20}" text-anchor="middle">{_esc(label)}</text>'
        )
    n_yticks = 5
    for i in range(n_yticks + 1):
        y = y_lo + (y_hi - y_lo) * i / n_yticks
        py = sy(y)
        parts.append(f'<line x1="{x0 - 5}" y1="{py}" x2="{x0}" y2="{py}" {ax}/>')
        parts.append(
            f'<text x="{x0 - 9}" y="{py + 4}" text-anchor="end">{y:g}</text>'
        )
        parts.append(
            f'<line x1="{x0}" y1="{py}" x2="{x0 + px_w}" y2="{py}" '
            f'stroke="#ddd" stroke-width="0.5"/>'
        )
    if xlabel:
        parts.append(
            f'<text x="{x0 + px_w / 2}" y="{H - 10}" '
            f'text-anchor="middle">{_esc(xlabel)}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="16" y="{MARGIN["top"] + px_h / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {MARGIN["top"] + px_h / 2})">{_esc(ylabel)}</text>'
        )

    for i, (name, points) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in points)
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for x, y in points:
            parts.append(
                f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}"/>'
            )
        ly = MARGIN["top"] + 16 * i + 10
        lx = W - MARGIN["right"] + 14
        parts.append(
            f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{lx + 24}" y="{ly + 4}">{_esc(name)}</text>')

    parts.append("</svg>")
    return "\n".join(parts)


def privacy_curve_chart(series_by_name: dict, eps_values) -> str:
    """Macro-F1 vs privacy budget; log-x with the non-private point at the
    right edge under an "inf" tick."""
    finite = sorted(e for e in eps_values if not math.isinf(e))
    has_inf = any(math.isinf(e) for e in eps_values)
    inf_pos = (math.log10(max(finite)) + 1.0) if finite else 1.0

    def pos(e):
        return inf_pos if math.isinf(e) else math.log10(e)

    ticks = [(math.log10(e), f"{e:g}") for e in finite]
    if has_inf:
        ticks.append((inf_pos, "∞"))
    series = [
        (name, [(pos(e), y) for e, y in sorted(pts, key=lambda p: pos(p[0]))])
        for name, pts in series_by_name.items()
    ]
    return line_chart(series, ticks, title="Macro-F1 vs privacy budget",
                      xlabel="epsilon (log scale)", ylabel="macro-F1")
