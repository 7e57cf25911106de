"""One-hold-interval gain/loss values over points and grids.

``v_min_delta`` asks how much the evader can gain when the pursuer freezes
an optimal selection for one hold interval of length delta: it minimizes
delta + V(xi(delta)) over constant evader inputs, with the pursuer's input
ranging over its (possibly two-element) selection set at the start state.
``v_max_delta`` is the pursuer-side mirror.  The value V is the trained
network estimate inside the surveillance disc, extended by 0 outside, so
flows that escape within the interval score the remaining game at 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .feedback import SelectionPolicy, selection_set
from .game import GameParams, State
from .mlp import MlpModel, forward

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class GainLossField:
    """Gridded one-interval gain/loss values over the disc bounding box."""

    delta: float
    res: int
    xs: np.ndarray
    ys: np.ndarray
    mask: np.ndarray
    values_min: np.ndarray
    values_max: np.ndarray
    value: np.ndarray


def value_eval(s: State, m: MlpModel, p: GameParams) -> float:
    """Game value estimate: network value inside the disc, 0 outside."""
    if s.norm() > p.rho:
        return 0.0
    return max(forward(m, (s.x, s.y))[0], 0.0)


def _flow_dt(delta: float) -> float:
    return min(1e-3, delta / 10.0)


def _flow_values(s0: State, ue, up, delta: float, m: MlpModel, p: GameParams):
    ue = np.asarray(ue, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    n = len(ue)
    return _kernels.flow_values(
        np.full(n, s0.x), np.full(n, s0.y), ue, up, delta, _flow_dt(delta),
        m.value_head_params(), p.v_e, p.v_p, p.omega_e, p.rho,
    )


def _golden_refine(f_batch, lo, hi, tol):
    """Lockstep golden-section minimization over a batch of brackets.

    Returns the best evaluated point and value per bracket (including the
    bracket interior points seen along the way).
    """
    lo = lo.astype(np.float64).copy()
    hi = hi.astype(np.float64).copy()
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc = f_batch(c)
    fd = f_batch(d)
    best_x = np.where(fc <= fd, c, d)
    best_f = np.minimum(fc, fd)
    while np.max(hi - lo) > tol:
        left = fc < fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        probe = np.where(left,
                         hi - _INVPHI * (hi - lo),
                         lo + _INVPHI * (hi - lo))
        fp = f_batch(probe)
        c, d = np.where(left, probe, d), np.where(left, c, probe)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        improved = fp < best_f
        best_x = np.where(improved, probe, best_x)
        best_f = np.where(improved, fp, best_f)
    return best_x, best_f


def _refine_brackets(grid, coarse_vals, n_best=3):
    """Brackets around the best coarse cells (cell +/- one grid step)."""
    order = np.argsort(coarse_vals, kind="stable")[:n_best]
    h = grid[1] - grid[0]
    lo = np.maximum(grid[order] - h, grid[0])
    hi = np.minimum(grid[order] + h, grid[-1])
    return lo, hi


def _dedupe(vals: list[float]) -> list[float]:
    out: list[float] = []
    for v in vals:
        if not any(v == w for w in out):
            out.append(v)
    return out


def v_min_delta(
    s0: State, delta: float, m: MlpModel, p: GameParams,
    *, policy: Optional[SelectionPolicy] = None,
) -> float:
    """Evader's best one-interval value against a frozen pursuer selection."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    policy = policy or SelectionPolicy()
    up_set = _dedupe([c.u_p for c in selection_set(s0, m, policy)])

    grid = np.linspace(-1.0, 1.0, 201)
    best = math.inf
    all_lo, all_hi, all_up = [], [], []
    for up in up_set:
        vals = _flow_values(s0, grid, np.full_like(grid, up), delta, m, p)
        best = min(best, float(vals.min()))
        lo, hi = _refine_brackets(grid, vals)
        all_lo.append(lo)
        all_hi.append(hi)
        all_up.append(np.full_like(lo, up))
    lo = np.concatenate(all_lo)
    hi = np.concatenate(all_hi)
    ups = np.concatenate(all_up)
    _, ref = _golden_refine(
        lambda u: _flow_values(s0, u, ups, delta, m, p), lo, hi, 1e-4
    )
    return delta + min(best, float(ref.min()))


def v_max_delta(
    s0: State, delta: float, m: MlpModel, p: GameParams,
    *, policy: Optional[SelectionPolicy] = None,
) -> float:
    """Pursuer's best one-interval value against a frozen evader selection."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    policy = policy or SelectionPolicy()
    ue_set = _dedupe([c.u_e for c in selection_set(s0, m, policy)])

    grid = -math.pi + 2.0 * math.pi * (np.arange(360) + 1.0) / 360.0
    best = -math.inf
    all_lo, all_hi, all_ue = [], [], []
    for ue in ue_set:
        vals = _flow_values(s0, np.full_like(grid, ue), grid, delta, m, p)
        best = max(best, float(vals.max()))
        lo, hi = _refine_brackets(grid, -vals)
        all_lo.append(lo)
        all_hi.append(hi)
        all_ue.append(np.full_like(lo, ue))
    lo = np.concatenate(all_lo)
    hi = np.concatenate(all_hi)
    ues = np.concatenate(all_ue)
    _, ref = _golden_refine(
        lambda u: -_flow_values(s0, ues, u, delta, m, p), lo, hi, 1e-4
    )
    return delta + max(best, float(-ref.min()))


def grid_coords(res: int, p: GameParams) -> np.ndarray:
    """Cell coordinates over [-rho, rho]; exact nesting across resolutions
    that share grid points."""
    return np.array([-p.rho + (2.0 * p.rho * i) / (res - 1) for i in range(res)])


def field_sweep(
    deltas: list[float], res: int, m: MlpModel, p: GameParams,
    *, policy: Optional[SelectionPolicy] = None,
) -> list[GainLossField]:
    """Evaluate both gain/loss functions on a res x res grid, disc-masked."""
    if res < 11:
        raise ValueError("resolution must be at least 11")
    policy = policy or SelectionPolicy()
    coords = grid_coords(res, p)
    fields = []
    for delta in deltas:
        vmin = np.full((res, res), np.nan)
        vmax = np.full((res, res), np.nan)
        val = np.full((res, res), np.nan)
        mask = np.zeros((res, res), dtype=bool)
        for i, x in enumerate(coords):
            for j, y in enumerate(coords):
                if x * x + y * y > p.rho * p.rho:
                    continue
                s = State(x, y)
                mask[i, j] = True
                vmin[i, j] = v_min_delta(s, delta, m, p, policy=policy)
                vmax[i, j] = v_max_delta(s, delta, m, p, policy=policy)
                val[i, j] = value_eval(s, m, p)
        fields.append(GainLossField(
            delta=delta, res=res, xs=coords, ys=coords.copy(),
            mask=mask, values_min=vmin, values_max=vmax, value=val,
        ))
    return fields


FIELD_HEADER = "x,y,vmin,vmax,v"


def save_field(field: GainLossField, csv_path, *, checkpoint_hash: str = "",
               params: Optional[GameParams] = None) -> None:
    """Field CSV (one row per masked cell) plus a JSON provenance sidecar."""
    with open(csv_path, "w") as f:
        f.write(FIELD_HEADER + "\n")
        for i, x in enumerate(field.xs):
            for j, y in enumerate(field.ys):
                if field.mask[i, j]:
                    row = (x, y, field.values_min[i, j], field.values_max[i, j],
                           field.value[i, j])
                    f.write(",".join("%.17g" % c for c in row) + "\n")
    sidecar = {
        "delta": field.delta,
        "res": field.res,
        "checkpoint_hash": checkpoint_hash,
    }
    if params is not None:
        sidecar["params"] = {"v_e": params.v_e, "v_p": params.v_p,
                             "omega_e": params.omega_e, "rho": params.rho}
    with open(str(csv_path) + ".json", "w") as f:
        json.dump(sidecar, f, indent=1)


def load_field_csv(path) -> np.ndarray:
    with open(path) as f:
        header = f.readline().strip()
        if header != FIELD_HEADER:
            raise ValueError(f"unexpected field header {header!r}")
        return np.loadtxt(f, delimiter=",", ndmin=2)
