"""Minimal SVG line charts for trajectory columns."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
W, H = 640, 400
ML, MR, MT, MB = 64, 16, 32, 44
MAX_POINTS = 2000


def _thin(t, ys):
    step = max(1, len(t) // MAX_POINTS)
    idx = np.r_[np.arange(0, len(t), step), len(t) - 1] if len(t) else np.arange(0)
    idx = np.unique(idx)
    return t[idx], [y[idx] for y in ys]


def _fmt(v):
    return f"{v:.3g}"


def line_chart(t, series, title="", xlabel="t", ylabel="", log_y=False, labels=None, dashed=()) -> str:
    """SVG text for ``series`` (list of arrays) against ``t``."""
    t = np.asarray(t, dtype=float)
    ys = [np.asarray(y, dtype=float) for y in series]
    t, ys = _thin(t, ys)
    if log_y:
        ys = [np.where(y > 0, np.log10(np.maximum(y, 1e-300)), np.nan) for y in ys]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.zeros(0)
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    t0, t1 = (float(t[0]), float(t[-1])) if len(t) else (0.0, 1.0)
    if t1 <= t0:
        t1 = t0 + 1.0

    def px(tv):
        return ML + (tv - t0) / (t1 - t0) * (W - ML - MR)

    def py(yv):
        return H - MB - (yv - y0) / (y1 - y0) * (H - MT - MB)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>',
           f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>']
    for k in range(5):
        tv = t0 + k * (t1 - t0) / 4
        yv = y0 + k * (y1 - y0) / 4
        ytxt = f"1e{_fmt(yv)}" if log_y else _fmt(yv)
        out.append(f'<text x="{px(tv):.1f}" y="{H - MB + 16}" text-anchor="middle" font-size="10">{_fmt(tv)}</text>')
        out.append(f'<text x="{ML - 4}" y="{py(yv) + 3:.1f}" text-anchor="end" font-size="10">{ytxt}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{H / 2}" transform="rotate(-90 14 {H / 2})" text-anchor="middle" '
               f'font-size="12">{escape(ylabel)}</text>')
    for k, y in enumerate(ys):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(t, y) if math.isfinite(b))
        dash = ' stroke-dasharray="6,4"' if k in dashed else ""
        out.append(f'<polyline fill="none" stroke="{PALETTE[k % len(PALETTE)]}" stroke-width="1.2"{dash} '
                   f'points="{pts}"/>')
    if labels:
        for k, lab in enumerate(labels):
            yy = MT + 14 * k + 8
            out.append(f'<line x1="{W - MR - 110}" y1="{yy}" x2="{W - MR - 90}" y2="{yy}" '
                       f'stroke="{PALETTE[k % len(PALETTE)]}"/>')
            out.append(f'<text x="{W - MR - 86}" y="{yy + 3}" font-size="10">{escape(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, svg: str) -> None:
    with open(path, "w") as fh:
        fh.write(svg)
