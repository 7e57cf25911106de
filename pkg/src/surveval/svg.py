"""Native SVG emission: rect-grid heatmaps and trajectory overlays.

No plotting dependency; figures here only display results.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

_SIZE = 640
_MARGIN = 60

# compact viridis approximation
_VIRIDIS = [
    (0.267, 0.005, 0.329), (0.283, 0.141, 0.458), (0.254, 0.265, 0.530),
    (0.207, 0.372, 0.553), (0.164, 0.471, 0.558), (0.128, 0.567, 0.551),
    (0.135, 0.659, 0.518), (0.267, 0.749, 0.441), (0.478, 0.821, 0.318),
    (0.741, 0.873, 0.150), (0.993, 0.906, 0.144),
]


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    pos = t * (len(_VIRIDIS) - 1)
    i = min(int(pos), len(_VIRIDIS) - 2)
    f = pos - i
    r, g, b = (
        _VIRIDIS[i][k] + f * (_VIRIDIS[i + 1][k] - _VIRIDIS[i][k]) for k in range(3)
    )
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


class _Canvas:
    def __init__(self, rho: float, title: str):
        self.rho = rho
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE + 110}" '
            f'height="{_SIZE + 2 * _MARGIN}" '
            f'viewBox="0 0 {_SIZE + 110} {_SIZE + 2 * _MARGIN}">',
            f'<rect width="100%" height="100%" fill="white"/>',
            f'<text x="{_MARGIN + (_SIZE - 2 * _MARGIN) / 2}" y="30" '
            f'text-anchor="middle" font-family="sans-serif" font-size="18">'
            f"{title}</text>",
        ]

    def to_px(self, x: float, y: float) -> tuple[float, float]:
        scale = (_SIZE - 2 * _MARGIN) / (2.0 * self.rho)
        return (_MARGIN + (x + self.rho) * scale,
                _SIZE - _MARGIN - (y + self.rho) * scale)

    def circle(self):
        cx, cy = self.to_px(0.0, 0.0)
        r = (_SIZE - 2 * _MARGIN) / 2.0
        self.parts.append(
            f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{r:.1f}" fill="none" '
            f'stroke="black" stroke-width="1.5"/>'
        )

    def colorbar(self, lo: float, hi: float):
        x0 = _SIZE + 10
        for k in range(100):
            t = 1.0 - k / 99.0
            y = _MARGIN + k * (_SIZE - 2 * _MARGIN) / 100.0
            self.parts.append(
                f'<rect x="{x0}" y="{y:.1f}" width="24" '
                f'height="{(_SIZE - 2 * _MARGIN) / 100 + 0.5:.2f}" '
                f'fill="{_color(t)}"/>'
            )
        for frac, val in ((0.0, hi), (1.0, lo)):
            y = _MARGIN + frac * (_SIZE - 2 * _MARGIN)
            self.parts.append(
                f'<text x="{x0 + 30}" y="{y + 5:.1f}" font-family="sans-serif" '
                f'font-size="13">{val:.3g}</text>'
            )

    def save(self, path):
        self.parts.append("</svg>")
        with open(path, "w") as f:
            f.write("\n".join(self.parts) + "\n")


def heatmap_svg(
    xs: np.ndarray,
    ys: np.ndarray,
    values: np.ndarray,
    path,
    *,
    rho: float,
    title: str = "",
    lo: Optional[float] = None,
    hi: Optional[float] = None,
) -> None:
    """Disc-masked heatmap; NaN cells are skipped."""
    finite = values[np.isfinite(values)]
    if len(finite) == 0:
        raise ValueError("heatmap has no finite cells")
    lo = float(finite.min()) if lo is None else lo
    hi = float(finite.max()) if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    cv = _Canvas(rho, title)
    step_x = xs[1] - xs[0] if len(xs) > 1 else rho
    scale = (_SIZE - 2 * _MARGIN) / (2.0 * rho)
    w = step_x * scale + 0.6
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            v = values[i, j]
            if not math.isfinite(v):
                continue
            px, py = cv.to_px(x - step_x / 2, y + step_x / 2)
            cv.parts.append(
                f'<rect x="{px:.1f}" y="{py:.1f}" width="{w:.1f}" height="{w:.1f}" '
                f'fill="{_color((v - lo) / span)}"/>'
            )
    cv.circle()
    cv.colorbar(lo, hi)
    cv.save(path)


_TRAJ_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def trajectory_svg(trajectories, path, *, rho: float, title: str = "") -> None:
    """Trajectories overlaid on the surveillance circle.

    ``trajectories`` is a list of (label, x array, y array).
    """
    cv = _Canvas(rho, title)
    cv.circle()
    for k, (label, x, y) in enumerate(trajectories):
        color = _TRAJ_COLORS[k % len(_TRAJ_COLORS)]
        pts = " ".join(
            f"{px:.2f},{py:.2f}" for px, py in (cv.to_px(a, b) for a, b in zip(x, y))
        )
        cv.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>'
        )
        sx, sy = cv.to_px(x[0], y[0])
        cv.parts.append(f'<circle cx="{sx:.1f}" cy="{sy:.1f}" r="4" fill="{color}"/>')
        cv.parts.append(
            f'<text x="{_MARGIN + 8}" y="{_MARGIN + 18 + 16 * k}" '
            f'font-family="sans-serif" font-size="13" fill="{color}">{label}</text>'
        )
    cv.save(path)
