"""Minimal deterministic SVG plots (scatter and line trace)."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

W, H = 480, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 20, 50


def _range(v):
    lo, hi = float(np.min(v)), float(np.max(v))
    if not math.isfinite(lo) or not math.isfinite(hi):
        raise ValueError("cannot plot non-finite values")
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo, hi, n=5):
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int(math.floor((hi - start) / step)) + 1)]


def _fmt(v):
    s = f"{v:.4g}"
    return "0" if s == "-0" else s


def _frame(xlo, xhi, ylo, yhi, xlabel, ylabel):
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - xlo) / (xhi - xlo) * pw

    def sy(y):
        return TOP + ph - (y - ylo) / (yhi - ylo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(xlo, xhi):
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" font-size="11" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(ylo, yhi):
        y = sy(t)
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 10}" font-size="13" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="15" y="{TOP + ph / 2:.1f}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 15 {TOP + ph / 2:.1f})">{ylabel}</text>')
    return out, sx, sy


def emit_scatter_svg(points, labels, path) -> None:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("scatter plot needs at least one point")
    if pts.shape[1] == 1:
        pts = np.column_stack([np.arange(len(pts)), pts[:, 0]])
        labels = ("iteration", labels[0])
    (xlo, xhi), (ylo, yhi) = _range(pts[:, 0]), _range(pts[:, 1])
    out, sx, sy = _frame(xlo, xhi, ylo, yhi, labels[0], labels[1])
    out.append('<g fill="steelblue" fill-opacity="0.4">')
    out.extend(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="1.6"/>' for x, y in pts[:, :2])
    out.append("</g></svg>")
    Path(path).write_text("\n".join(out) + "\n")


def emit_trace_svg(values, label, path) -> None:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("trace plot needs at least one value")
    it = np.arange(len(v), dtype=float)
    (xlo, xhi), (ylo, yhi) = _range(it), _range(v)
    out, sx, sy = _frame(xlo, xhi, ylo, yhi, "iteration", label)
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(it, v))
    out.append(f'<polyline fill="none" stroke="steelblue" stroke-width="1" points="{pts}"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
