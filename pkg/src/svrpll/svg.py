"""Plain SVG output for simulation traces; no plotting library needed."""

from __future__ import annotations

import math
from typing import Iterable, List, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from svrpll.sim import Trace, error_stats


class _Frame:
    """Maps data coordinates into a pixel box (y axis pointing up)."""

    def __init__(self, xlim, ylim, x0, y0, width, height, equal=False):
        (xa, xb), (ya, yb) = xlim, ylim
        if xb - xa < 1e-12:
            xa, xb = xa - 1, xb + 1
        if yb - ya < 1e-12:
            ya, yb = ya - 1, yb + 1
        sx = width / (xb - xa)
        sy = height / (yb - ya)
        if equal:
            sx = sy = min(sx, sy)
        self.xa, self.ya, self.sx, self.sy = xa, ya, sx, sy
        self.x0, self.y0, self.h = x0, y0, height

    def __call__(self, x, y) -> Tuple[float, float]:
        return self.x0 + (x - self.xa) * self.sx, self.y0 + self.h - (y - self.ya) * self.sy


def _polyline(points: Iterable[Tuple[float, float]], color: str, width: float = 1.0, dash: str = "") -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>'


def _text(x, y, s, size=12, anchor="start") -> str:
    return f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" text-anchor="{anchor}" font-family="sans-serif">{escape(s)}</text>'


def _document(width, height, body: List[str]) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def covariance_ellipse(cov2: np.ndarray, n_sigma: float = 3.0, n_points: int = 48) -> np.ndarray:
    """Points of the n-sigma ellipse of a 2x2 covariance, centred at the origin."""
    vals, vecs = np.linalg.eigh(np.asarray(cov2, dtype=float))
    vals = np.maximum(vals, 0.0)
    t = np.linspace(0.0, 2.0 * math.pi, n_points)
    circle = np.stack([np.cos(t), np.sin(t)])
    return (vecs @ (n_sigma * np.sqrt(vals)[:, None] * circle)).T


def trajectory_svg(trace: Trace, ellipse_every: int = 200, size: int = 640) -> str:
    pts = np.vstack([trace.true[:, :2], trace.est[:, :2],
                     np.array([[p.x, p.y] for p in trace.waypoints]),
                     np.array([[p.x, p.y] for p in trace.landmarks.values()]).reshape(-1, 2)])
    lo, hi = pts.min(axis=0) - 5.0, pts.max(axis=0) + 5.0
    f = _Frame((lo[0], hi[0]), (lo[1], hi[1]), 40, 30, size - 60, size - 60, equal=True)
    body = [_text(size / 2, 20, "true and estimated trajectory", 14, "middle")]
    body.append(_polyline((f(p.x, p.y) for p in trace.waypoints), "#bbbbbb", 1.0, "4 3"))
    body.append(_polyline((f(x, y) for x, y in trace.true[:, :2]), "#1f77b4", 1.5))
    body.append(_polyline((f(x, y) for x, y in trace.est[:, :2]), "#d62728", 1.0, "3 2"))
    for k in range(0, len(trace), max(1, ellipse_every)):
        sxy = trace.cov_xy[k]
        cov2 = np.array([[trace.cov_diag[k, 0], sxy], [sxy, trace.cov_diag[k, 1]]])
        ring = covariance_ellipse(cov2) + trace.est[k, :2]
        body.append(_polyline((f(x, y) for x, y in ring), "#2ca02c", 0.8))
    for i, p in enumerate(trace.waypoints[:-1]):
        cx, cy = f(p.x, p.y)
        body.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="black"/>')
        body.append(_text(cx + 4, cy - 4, f"WP-{i + 1}", 9))
    for k, p in trace.landmarks.items():
        cx, cy = f(p[0], p[1])
        body.append(f'<rect x="{cx - 4:.2f}" y="{cy - 4:.2f}" width="8" height="8" fill="#ff7f0e"/>')
        body.append(_text(cx + 5, cy + 10, f"LM {k}", 9))
    body.append(_text(50, size - 8, "blue: true   red dashed: estimate   green: 3-sigma   orange: landmarks", 10))
    return _document(size, size, body)


def errors_svg(trace: Trace, width: int = 720, panel_height: int = 180) -> str:
    rep = error_stats(trace)
    t = np.arange(len(trace)) * trace.dt
    names = ["x error", "y error", "heading error (rad)"]
    body = []
    height = 3 * (panel_height + 40) + 20
    for a in range(3):
        top = 20 + a * (panel_height + 40)
        e, s = rep.errors[:, a], rep.sigma3[:, a]
        lim = float(max(np.max(np.abs(e)), np.max(s), 1e-9)) * 1.1
        f = _Frame((t[0], t[-1] if len(t) > 1 else 1.0), (-lim, lim), 60, top + 20, width - 80, panel_height)
        body.append(_text(60, top + 14, f"{names[a]} with 3-sigma bound "
                                        f"(inside {100 * rep.containment[a]:.1f}%)", 12))
        x0, y0 = f(t[0], -lim)
        x1, y1 = f(t[-1] if len(t) > 1 else 1.0, lim)
        body.append(f'<rect x="{x0:.1f}" y="{y1:.1f}" width="{x1 - x0:.1f}" height="{y0 - y1:.1f}" '
                    f'fill="none" stroke="#888"/>')
        body.append(_polyline(zip(*f(t, np.zeros_like(t))), "#cccccc", 0.8))
        body.append(_polyline(zip(*f(t, s)), "#2ca02c", 1.0, "4 2"))
        body.append(_polyline(zip(*f(t, -s)), "#2ca02c", 1.0, "4 2"))
        body.append(_polyline(zip(*f(t, e)), "#1f77b4", 1.0))
        body.append(_text(x0 - 4, y1 + 10, f"{lim:.3g}", 9, "end"))
        body.append(_text(x0 - 4, y0, f"{-lim:.3g}", 9, "end"))
    body.append(_text(width / 2, height - 6, "time (s)", 11, "middle"))
    return _document(width, height, body)
