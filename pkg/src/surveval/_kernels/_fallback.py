"""Pure-Python/NumPy implementations of the hot integration kernels.

Semantically identical to the compiled extension in ``_core.pyx``; kept
deliberately close in structure so the two stay in lock step.  The scalar
characteristic tracer is plain Python (sequential by nature); the flow
evaluator is vectorized across rows.
"""
from __future__ import annotations

import math

import numpy as np

# retrograde stop reasons
STOP_BUDGET = 0
STOP_EXIT = 1
STOP_CROSSED = 2


def _ue_switch(s: float, scale: float, carry: float) -> float:
    # deadband absorbs round-off of the switching function near singular arcs
    tol = 1e-12 * scale
    if s > tol:
        return 1.0
    if s < -tol:
        return -1.0
    return carry


def trace_characteristic(
    x0: float,
    y0: float,
    lx0: float,
    ly0: float,
    ue0: float,
    dtau: float,
    n_max: int,
    ve: float,
    vp: float,
    we: float,
    rho: float,
    lift_guard: float = 1e-9,
):
    """Integrate the retrograde characteristic system with embedded feedback.

    Returns ``(points, status)`` where ``points`` has one row
    ``(x, y, lx, ly, ue, up)`` per accepted point in order of increasing
    retrograde time (spacing ``dtau``), and ``status`` is one of
    ``STOP_BUDGET``, ``STOP_EXIT`` (next point left the disc) or
    ``STOP_CROSSED`` (x changed sign after lifting off the axis).
    The recorded controls are the feedback values in effect at the point.
    """
    out = np.empty((n_max + 1, 6), dtype=np.float64)
    x, y, lx, ly = float(x0), float(y0), float(lx0), float(ly0)
    ue = float(ue0)
    rho2 = rho * rho
    lifted = x > lift_guard
    x_sign = 1.0 if x >= 0.0 else -1.0
    status = STOP_BUDGET
    n = 0

    def rhs(x, y, lx, ly, ue):
        lam = math.hypot(lx, ly)
        fx = -we * y * ue + vp * lx / lam
        fy = we * x * ue - ve + vp * ly / lam
        return -fx, -fy, we * ue * ly, -we * ue * lx

    for _ in range(n_max):
        s = lx * y - ly * x
        ue = _ue_switch(s, (abs(lx) + abs(ly)) * (abs(x) + abs(y)), ue)
        out[n, 0] = x
        out[n, 1] = y
        out[n, 2] = lx
        out[n, 3] = ly
        out[n, 4] = ue
        out[n, 5] = math.atan2(lx, ly)
        n += 1

        k1 = rhs(x, y, lx, ly, ue)
        h = 0.5 * dtau
        x2, y2 = x + h * k1[0], y + h * k1[1]
        lx2, ly2 = lx + h * k1[2], ly + h * k1[3]
        ue = _ue_switch(lx2 * y2 - ly2 * x2, (abs(lx2) + abs(ly2)) * (abs(x2) + abs(y2)), ue)
        k2 = rhs(x2, y2, lx2, ly2, ue)
        x3, y3 = x + h * k2[0], y + h * k2[1]
        lx3, ly3 = lx + h * k2[2], ly + h * k2[3]
        ue = _ue_switch(lx3 * y3 - ly3 * x3, (abs(lx3) + abs(ly3)) * (abs(x3) + abs(y3)), ue)
        k3 = rhs(x3, y3, lx3, ly3, ue)
        x4, y4 = x + dtau * k3[0], y + dtau * k3[1]
        lx4, ly4 = lx + dtau * k3[2], ly + dtau * k3[3]
        ue = _ue_switch(lx4 * y4 - ly4 * x4, (abs(lx4) + abs(ly4)) * (abs(x4) + abs(y4)), ue)
        k4 = rhs(x4, y4, lx4, ly4, ue)

        x += dtau / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        y += dtau / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        lx += dtau / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        ly += dtau / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])

        if x * x + y * y > rho2:
            status = STOP_EXIT
            break
        if not lifted and x * x_sign > lift_guard:
            lifted = True
        if lifted and x * x_sign < 0.0:
            status = STOP_CROSSED
            break
    else:
        s = lx * y - ly * x
        ue = _ue_switch(s, (abs(lx) + abs(ly)) * (abs(x) + abs(y)), ue)
        out[n] = (x, y, lx, ly, ue, math.atan2(lx, ly))
        n += 1

    return out[:n].copy(), status


def _psi_v(mlp, xy: np.ndarray) -> np.ndarray:
    """Value head of the trained network, batched over rows of ``xy``."""
    w1, b1, w2, b2, w3, b3, wv, bv = mlp
    z = np.maximum(xy @ w1.T + b1, 0.0)
    z = np.maximum(z @ w2.T + b2, 0.0)
    z = np.maximum(z @ w3.T + b3, 0.0)
    return (z @ wv.T + bv)[:, 0]


def flow_values(
    x0: np.ndarray,
    y0: np.ndarray,
    ue: np.ndarray,
    up: np.ndarray,
    delta: float,
    dt_target: float,
    mlp,
    ve: float,
    vp: float,
    we: float,
    rho: float,
) -> np.ndarray:
    """Game value after a constant-control flow of duration ``delta``.

    One flow per row of the equally sized input arrays.  A row that leaves
    the disc at any integration step is scored 0 (the game has ended);
    otherwise the value is the clamped network estimate at the endpoint.
    """
    n_steps = max(1, math.ceil(delta / dt_target - 1e-12))
    dt = delta / n_steps
    x = np.asarray(x0, dtype=np.float64).copy()
    y = np.asarray(y0, dtype=np.float64).copy()
    a = we * np.asarray(ue, dtype=np.float64)
    bx = vp * np.sin(np.asarray(up, dtype=np.float64))
    by = vp * np.cos(np.asarray(up, dtype=np.float64)) - ve
    rho2 = rho * rho
    alive = x * x + y * y <= rho2
    for _ in range(n_steps):
        k1x = -a * y + bx
        k1y = a * x + by
        x2 = x + 0.5 * dt * k1x
        y2 = y + 0.5 * dt * k1y
        k2x = -a * y2 + bx
        k2y = a * x2 + by
        x3 = x + 0.5 * dt * k2x
        y3 = y + 0.5 * dt * k2y
        k3x = -a * y3 + bx
        k3y = a * x3 + by
        x4 = x + dt * k3x
        y4 = y + dt * k3y
        k4x = -a * y4 + bx
        k4y = a * x4 + by
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        alive &= x * x + y * y <= rho2
    vals = _psi_v(mlp, np.column_stack([x, y]))
    return np.where(alive, np.maximum(vals, 0.0), 0.0)
