"""Open-loop optimal-solution data via retrograde characteristics.

The value field is swept out backward in time by three characteristic
families on the x >= 0 half of the disc, mirrored to x < 0:

* ``terminal``       -- branches anchored on the usable part of the circle,
* ``universal_trib`` -- branches peeling off the negative y-axis, where
                        optimal paths merge and ride down to the circle,
* ``dispersal_trib`` -- branches peeling off the positive y-axis, whose
                        one-sided costate follows from the sliding relations
                        below.

On the positive axis the feedback is two-valued and the optimal flow
slides; requiring a unit value rate, a vanishing Hamiltonian and tangential
lift-off pins the one-sided costate to

    lam_y(y) = 1 / (v_e - sqrt(v_p^2 - (w_e y)^2)),
    |lam|(y) = v_p lam_y / sqrt(v_p^2 - (w_e y)^2),

and the axis value to V(0, y) = rho/(v_e - v_p) + integral of lam_y, which
integrates in closed form.  On the negative axis V(0, y) =
(rho + y)/(v_e - v_p) exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .game import Controls, DegenerateCrossing, GameParams, State, boundary_crossing, rk4_step

_STOP_NAMES = {
    _kernels.STOP_BUDGET: "budget",
    _kernels.STOP_EXIT: "exit",
    _kernels.STOP_CROSSED: "crossed",
}


class NotUsable(Exception):
    """Terminal angle outside the usable part of the circle."""


class SingularStall(Exception):
    """Terminal point on the y-axis: the branch is an axis line, not a generic branch."""


class EmptyUsablePart(Exception):
    """No usable terminal angles (corrupt parameters)."""


@dataclass(frozen=True)
class Costate:
    """Value gradient carried along a characteristic."""

    lx: float
    ly: float

    def __post_init__(self):
        if not (math.isfinite(self.lx) and math.isfinite(self.ly)):
            raise ValueError("costate components must be finite")
        if self.lx == 0.0 and self.ly == 0.0:
            raise ValueError("costate cannot vanish on a characteristic")

    def norm(self) -> float:
        return math.hypot(self.lx, self.ly)


@dataclass(frozen=True)
class CharacteristicPoint:
    """One data tuple (position, value gradient, value)."""

    x: float
    y: float
    dvx: float
    dvy: float
    v: float


@dataclass(frozen=True)
class TerminalCondition:
    """Usable-part anchor: terminal angle, costate scale and costate."""

    beta: float
    c: float
    costate: Costate
    state: State


@dataclass
class Characteristic:
    """One retrograde branch: states, costates, controls and values.

    ``data`` columns are (x, y, lx, ly, ue, up), one row per point in order
    of increasing value; ``continuation`` holds the per-step forward control
    schedule that realizes the start value ``v[0]`` from ``data[0]`` (empty
    for branches anchored on the terminal circle).
    """

    family: str
    data: np.ndarray
    v: np.ndarray
    stop: str
    continuation: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.data)

    @property
    def x(self):
        return self.data[:, 0]

    @property
    def y(self):
        return self.data[:, 1]

    @property
    def lx(self):
        return self.data[:, 2]

    @property
    def ly(self):
        return self.data[:, 3]

    @property
    def ue(self):
        return self.data[:, 4]

    @property
    def up(self):
        return self.data[:, 5]

    def point(self, i: int) -> CharacteristicPoint:
        x, y, lx, ly = self.data[i, :4]
        return CharacteristicPoint(x, y, lx, ly, self.v[i])


@dataclass
class Dataset:
    """Flat collection of characteristic points, columns (x, y, dvx, dvy, v)."""

    points: np.ndarray
    n_envelope_dropped: int = 0

    def __len__(self) -> int:
        return len(self.points)

    @property
    def x(self):
        return self.points[:, 0]

    @property
    def y(self):
        return self.points[:, 1]

    @property
    def dvx(self):
        return self.points[:, 2]

    @property
    def dvy(self):
        return self.points[:, 3]

    @property
    def v(self):
        return self.points[:, 4]


def usable_angle_limit(p: GameParams) -> float:
    """Smallest terminal angle (from the +y axis) admitting outward escape."""
    return math.acos(-p.v_p / p.v_e)


def terminal_costate(beta: float, p: GameParams) -> TerminalCondition:
    """Costate on the terminal circle at angle ``beta``.

    The circle is an isochrone of the game, so the costate is normal to it;
    its scale follows from the vanishing Hamiltonian under the optimal
    terminal controls.
    """
    x_t = p.rho * math.sin(beta)
    y_t = p.rho * math.cos(beta)
    denom = p.v_p * p.rho + p.v_e * y_t
    if denom >= -1e-12 * p.v_e * p.rho:
        raise NotUsable(
            f"terminal angle beta={beta} lies outside the usable part "
            f"(cos beta must be < -v_p/v_e = {-p.v_p / p.v_e})"
        )
    c = p.rho / denom
    return TerminalCondition(
        beta=beta,
        c=c,
        costate=Costate(c * x_t / p.rho, c * y_t / p.rho),
        state=State(x_t, y_t),
    )


def hamiltonian_residual(x, y, lx, ly, p: GameParams):
    """lambda^T f(xi, u*) + 1 under the optimal feedback pair, vectorized."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lx = np.asarray(lx, dtype=np.float64)
    ly = np.asarray(ly, dtype=np.float64)
    s = lx * y - ly * x
    lam = np.hypot(lx, ly)
    return -p.omega_e * np.abs(s) - p.v_e * ly + p.v_p * lam + 1.0


def _make_characteristic(family, x0, y0, lx0, ly0, ue0, v0, dtau, tau_max, p,
                         continuation=None) -> Characteristic:
    n_max = int(round(tau_max / dtau))
    data, status = _kernels.trace_characteristic(
        x0, y0, lx0, ly0, ue0, dtau, n_max, p.v_e, p.v_p, p.omega_e, p.rho
    )
    v = v0 + dtau * np.arange(len(data))
    return Characteristic(
        family=family,
        data=data,
        v=v,
        stop=_STOP_NAMES[status],
        continuation=continuation,
    )


def generate_characteristic(
    tc: TerminalCondition, dtau: float, tau_max: float, p: GameParams
) -> Characteristic:
    """Retrograde branch from a usable terminal condition.

    The evader control at the terminal point is singular (the switching
    function vanishes identically on the circle); its first-order expansion
    in retrograde time fixes the sign to -sign(x_T).  A branch reaching the
    y-axis on the terminal side stops there (dispersal); a branch leaving
    the disc stops at the last interior point.
    """
    if not 0.0 < dtau <= 1e-2:
        raise ValueError("dtau must lie in (0, 1e-2]")
    if abs(tc.state.x) < 1e-9 * p.rho:
        raise SingularStall(
            "terminal point on the y-axis: the universal line is generated "
            "analytically, not by retrograde integration"
        )
    ue0 = -1.0 if tc.state.x > 0.0 else 1.0
    return _make_characteristic(
        "terminal", tc.state.x, tc.state.y, tc.costate.lx, tc.costate.ly,
        ue0, 0.0, dtau, tau_max, p,
    )


# ---------------------------------------------------------------------------
# axis lines and their tributaries

def universal_line_value(y: float, p: GameParams) -> float:
    """Exact value on the negative y-axis: straight-line escape dead astern."""
    return (p.rho + y) / (p.v_e - p.v_p)


def dispersal_liftoff_limit(p: GameParams) -> float:
    """Largest axis height from which lens branches lift off to their own side.

    The second-order liftoff term changes sign where lam_y = 2/v_e; above
    that height the near-axis sheet is swept by branches anchored lower
    down, which hug the axis on their way up.
    """
    if p.v_e >= 2.0 * p.v_p:
        raise ValueError(
            "no tangential liftoff exists for v_e >= 2 v_p; this construction "
            "supports the regime v_p < v_e < 2 v_p"
        )
    return math.sqrt(p.v_p * p.v_p - (p.v_e / 2.0) ** 2) / p.omega_e


def dispersal_axis_costate(y: float, p: GameParams) -> Costate:
    """One-sided costate (x -> 0+) of the liftoff data on the sliding line.

    Valid as liftoff data only below :func:`dispersal_liftoff_limit`; the
    lam_y component (and the axis value) remain the one-sided limits of the
    field all the way up the axis.
    """
    w = p.v_p * p.v_p - (p.omega_e * y) ** 2
    if y < 0.0 or w <= 0.0:
        raise ValueError("dispersal axis data requires 0 <= y < v_p/omega_e")
    root = math.sqrt(w)
    ly = 1.0 / (p.v_e - root)
    lam = p.v_p * ly / root
    lx = -math.sqrt(max(lam * lam - ly * ly, 0.0))
    return Costate(lx, ly)


def dispersal_axis_value(y: float, p: GameParams) -> float:
    """Value on the positive-axis sliding line (closed form).

    Integrates lam_y(y) = 1/(v_e - sqrt(v_p^2 - (w_e y)^2)) from 0 to y via
    the substitution w_e y = v_p sin(phi).
    """
    if y < 0.0:
        raise ValueError("dispersal axis value requires y >= 0")
    arg = min(p.omega_e * y / p.v_p, 1.0)
    phi = math.asin(arg)
    a, b = p.v_e, p.v_p
    root = math.sqrt(a * a - b * b)
    primitive = (-phi + 2.0 * a / root * math.atan(
        math.sqrt((a + b) / (a - b)) * math.tan(0.5 * phi)
    )) / p.omega_e
    return p.rho / (p.v_e - p.v_p) + primitive


def _slide_rate(y: float, p: GameParams) -> float:
    if y > 0.0:
        w = max(p.v_p * p.v_p - (p.omega_e * y) ** 2, 0.0)
        return -(p.v_e - math.sqrt(w))
    return -(p.v_e - p.v_p)


def _slide_schedule(y_start: float, v0: float, dtau: float, p: GameParams) -> np.ndarray:
    """Forward control schedule holding the y-axis from (0, y_start) to escape.

    On the positive axis the one-sided optimal pair (u_e = -1,
    u_p = -asin(w_e y / v_p)) keeps xdot = 0 exactly; on the negative axis
    the singular pair (0, 0) does.  Scheduled with a 25% margin past v0.
    """
    n = int(math.ceil(1.25 * v0 / dtau)) + 4
    sched = np.zeros((n, 2), dtype=np.float64)
    y = y_start
    for k in range(n):
        if y > 1e-12:
            sched[k, 0] = -1.0
            sched[k, 1] = -math.asin(min(p.omega_e * y / p.v_p, 1.0))
            k1 = _slide_rate(y, p)
            k2 = _slide_rate(y + 0.5 * dtau * k1, p)
            k3 = _slide_rate(y + 0.5 * dtau * k2, p)
            k4 = _slide_rate(y + dtau * k3, p)
            y += dtau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            sched[k, 0] = 0.0
            sched[k, 1] = 0.0
            y -= (p.v_e - p.v_p) * dtau
    return sched


def universal_line(p: GameParams, dtau: float) -> Characteristic:
    """The negative y-axis as an analytic characteristic (singular control 0)."""
    tau_end = p.rho / (p.v_e - p.v_p)
    n = int(math.floor(tau_end / dtau + 1e-9)) + 1
    tau = dtau * np.arange(n)
    data = np.zeros((n, 6), dtype=np.float64)
    data[:, 1] = -p.rho + (p.v_e - p.v_p) * tau
    data[:, 3] = 1.0 / (p.v_e - p.v_p)
    return Characteristic(family="universal_line", data=data, v=tau, stop="budget",
                          continuation=np.zeros((0, 2)))


def universal_tributary(y0: float, p: GameParams, dtau: float, tau_max: float) -> Characteristic:
    """Branch peeling off the negative y-axis at (0, y0) into x > 0."""
    if not -p.rho < y0 < 0.0:
        raise ValueError("universal tributary start must satisfy -rho < y0 < 0")
    v0 = universal_line_value(y0, p)
    return _make_characteristic(
        "universal_trib", 0.0, y0, 0.0, 1.0 / (p.v_e - p.v_p), -1.0,
        v0, dtau, tau_max, p,
        continuation=_slide_schedule(y0, v0, dtau, p),
    )


def dispersal_tributary(y0: float, p: GameParams, dtau: float, tau_max: float) -> Characteristic:
    """Branch peeling off the positive y-axis at (0, y0) into x > 0."""
    if not 0.0 < y0 < dispersal_liftoff_limit(p):
        raise ValueError("dispersal tributary start must satisfy 0 < y0 < liftoff limit")
    lam = dispersal_axis_costate(y0, p)
    v0 = dispersal_axis_value(y0, p)
    return _make_characteristic(
        "dispersal_trib", 0.0, y0, lam.lx, lam.ly, -1.0,
        v0, dtau, tau_max, p,
        continuation=_slide_schedule(y0, v0, dtau, p),
    )


def replay_characteristic(ch: Characteristic, index: int, p: GameParams,
                          dtau: float) -> float:
    """Forward time-to-escape from point ``index`` under the stored controls.

    Replays the per-step control record down the branch and then the
    continuation schedule, and returns the time of the outward boundary
    crossing (inf if none occurs within the schedule plus a 50% margin).
    """
    sched = [(ch.data[j, 4], ch.data[j, 5]) for j in range(index, 0, -1)]
    if ch.continuation is not None and len(ch.continuation):
        sched.extend((row[0], row[1]) for row in ch.continuation)
    if not sched:
        sched = [(ch.data[0, 4], ch.data[0, 5])]
    extra = max(10, len(sched) // 2)
    sched.extend([sched[-1]] * extra)

    s = State(ch.data[index, 0], ch.data[index, 1])
    t = 0.0
    for ue, up in sched:
        c = Controls(float(np.clip(ue, -1.0, 1.0)), float(up))
        s_next = rk4_step(s, c, dtau, p)
        try:
            hit = boundary_crossing(s, s_next, c, p)
        except DegenerateCrossing:
            hit = None
        if hit is not None:
            return t + hit[0] * dtau
        s = s_next
        t += dtau
    return math.inf


# ---------------------------------------------------------------------------
# dataset assembly

def _stride_indices(n: int, stride: int) -> np.ndarray:
    idx = np.arange(0, n, max(1, stride))
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def _envelope_filter(points: np.ndarray, cell: float, slack: float) -> np.ndarray:
    """Evader-optimal envelope: drop points far above their cell's minimum value.

    The slack scales with the minimum point's costate so that legitimate
    within-cell variation of steep sheets survives; only genuinely
    conflicting overlaps (distinct sheets with clearly different values)
    are removed.
    """
    ix = np.floor(points[:, 0] / cell).astype(np.int64)
    iy = np.floor(points[:, 1] / cell).astype(np.int64)
    key = (ix << 32) ^ (iy & 0xFFFFFFFF)
    order = np.argsort(key, kind="stable")
    keep = np.ones(len(points), dtype=bool)
    v = points[:, 4]
    lam = np.hypot(points[:, 2], points[:, 3])
    ks = key[order]
    start = 0
    for i in range(1, len(order) + 1):
        if i == len(order) or ks[i] != ks[start]:
            grp = order[start:i]
            j = grp[np.argmin(v[grp])]
            keep[grp] = v[grp] <= v[j] + slack + 3.0 * cell * lam[j]
            start = i
    return keep


def build_dataset(
    p: GameParams,
    n_angles: int = 720,
    dtau: float = 1e-3,
    tau_max: float = 6.0,
    *,
    n_tributaries: Optional[int] = None,
    store_stride: int = 20,
    costate_cap: float = 40.0,
    angle_margin: float = 0.02,
    envelope_cell: float = 0.02,
    envelope_slack: float = 0.05,
    return_characteristics: bool = False,
):
    """Generate the full training dataset.

    Branches are generated on the x >= 0 half only (terminal-arc branches,
    tributaries of both axis lines, and the universal line itself), thinned
    along each branch to every ``store_stride``-th point, filtered by the
    per-cell minimum-value envelope, and mirrored across the y-axis.

    ``costate_cap`` bounds the costate magnitude of the sampled anchors,
    trimming the thin steep layers at the two field corners where the
    gradient blows up; ``angle_margin`` keeps terminal-arc anchors off the
    y-axis, where branches shadow the universal line.
    """
    if n_angles < 2:
        raise ValueError("n_angles must be at least 2")
    n_trib = n_tributaries if n_tributaries is not None else max(2, n_angles // 2)

    beta_star = usable_angle_limit(p)
    cos_lo = -(p.v_p + 1.0 / costate_cap) / p.v_e
    if cos_lo < -1.0:
        raise EmptyUsablePart("costate cap admits no usable terminal angle")
    beta_lo = math.acos(cos_lo)
    beta_hi = math.pi - angle_margin
    if not beta_star <= beta_lo < beta_hi:
        raise EmptyUsablePart("no usable terminal angles for these parameters")

    chars: list[Characteristic] = []
    for i in range(n_angles):
        beta = beta_lo + (i + 0.5) * (beta_hi - beta_lo) / n_angles
        chars.append(generate_characteristic(terminal_costate(beta, p), dtau, tau_max, p))

    for i in range(n_trib):
        y0 = -p.rho + (i + 0.5) * p.rho / n_trib
        chars.append(universal_tributary(y0, p, dtau, tau_max))

    # cap the dispersal-axis anchors at the liftoff limit and where the
    # one-sided costate reaches the cap
    disc = p.v_e * p.v_e - 4.0 * p.v_p / costate_cap
    w_star = (p.v_e - math.sqrt(disc)) / 2.0 if disc > 0.0 else p.v_e / 2.0
    y_cap = math.sqrt(max(p.v_p * p.v_p - w_star * w_star, 0.0)) / p.omega_e
    y_cap = min(y_cap, dispersal_liftoff_limit(p) * (1.0 - 1e-9), p.rho * (1.0 - 1e-9))
    for i in range(n_trib):
        y0 = (i + 0.5) * y_cap / n_trib
        chars.append(dispersal_tributary(y0, p, dtau, tau_max))

    chars.append(universal_line(p, dtau))

    blocks = []
    for ch in chars:
        stride = max(1, store_stride // 4) if ch.family == "universal_line" else store_stride
        idx = _stride_indices(len(ch), stride)
        blocks.append(np.column_stack([ch.data[idx, :4], ch.v[idx]]))
    half = np.vstack(blocks)

    keep = _envelope_filter(half, envelope_cell, envelope_slack)
    half = half[keep]
    n_dropped = int((~keep).sum())

    mirror_mask = (half[:, 0] > 0.0) | ((half[:, 0] == 0.0) & (half[:, 2] != 0.0))
    mirrored = half[mirror_mask].copy()
    mirrored[:, 0] *= -1.0
    mirrored[:, 2] *= -1.0
    full = np.vstack([half, mirrored])

    order = np.lexsort((full[:, 4], full[:, 3], full[:, 2], full[:, 1], full[:, 0]))
    ds = Dataset(points=full[order], n_envelope_dropped=n_dropped)
    if return_characteristics:
        return ds, chars
    return ds


CSV_HEADER = "x,y,dvx,dvy,v"


def write_dataset_csv(ds: Dataset, path) -> None:
    """Write the dataset with full double precision, sorted for reproducibility."""
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for row in ds.points:
            f.write(",".join("%.17g" % c for c in row) + "\n")


def load_dataset_csv(path) -> Dataset:
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected dataset header {header!r}")
        pts = np.loadtxt(f, delimiter=",", ndmin=2)
    if pts.shape[1] != 5:
        raise ValueError("dataset must have exactly 5 columns")
    return Dataset(points=pts)
