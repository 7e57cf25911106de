"""Sample-and-hold closed-loop simulation with per-player sampling periods.

Each player refreshes its control from the feedback only at integer
multiples of its own sampling period and holds it constant in between; the
game ends at the first outward crossing of the surveillance circle, located
inside the step that produced it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .feedback import SelectionPolicy, select_controls
from .game import Controls, GameParams, State, boundary_crossing, dynamics, rk4_step
from .mlp import MlpModel


def _multiple_of(period: float, dt: float) -> int:
    n = round(period / dt)
    if n < 1 or abs(period / dt - n) > 1e-9:
        raise ValueError(f"sampling period {period} is not an integer multiple of dt={dt}")
    return n


@dataclass(frozen=True)
class SampleHoldConfig:
    delta_e: float
    delta_p: float
    dt: float = 1e-3
    t_max: float = 20.0
    policy: SelectionPolicy = field(default_factory=SelectionPolicy)

    def __post_init__(self):
        if not 0.0 < self.dt <= min(self.delta_e, self.delta_p):
            raise ValueError("dt must satisfy 0 < dt <= min(delta_e, delta_p)")
        if not self.t_max > 0.0:
            raise ValueError("t_max must be positive")
        _multiple_of(self.delta_e, self.dt)
        _multiple_of(self.delta_p, self.dt)


@dataclass
class Trajectory:
    """Sampled states plus the piecewise-constant control record.

    ``t``/``x``/``y`` hold one row per integrator step boundary (the last
    row is the located boundary crossing when the game terminated);
    ``ue``/``up`` hold the control in effect on each step interval, aligned
    with the interval's opening row and repeated on the final row.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    ue: np.ndarray
    up: np.ndarray
    T: Optional[float]

    @property
    def horizon_exhausted(self) -> bool:
        return self.T is None


def simulate(s0: State, m: MlpModel, cfg: SampleHoldConfig, p: GameParams) -> Trajectory:
    """Run the sample-and-hold closed loop from ``s0`` until escape or t_max."""
    if s0.norm() > p.rho * (1.0 + 1e-12):
        raise ValueError("initial state lies outside the game set")

    n_e = _multiple_of(cfg.delta_e, cfg.dt)
    n_p = _multiple_of(cfg.delta_p, cfg.dt)
    n_steps = int(math.floor(cfg.t_max / cfg.dt + 1e-9))

    ts, xs, ys, ues, ups = [0.0], [s0.x], [s0.y], [], []

    held_e = held_p = 0.0
    s = s0
    # a start on the circle that is already moving outward ends immediately
    if abs(s0.norm() - p.rho) <= 1e-9:
        cand, _ = select_controls(s0, m, cfg.policy)
        c = Controls(cand.u_e, cand.u_p)
        fx, fy = dynamics(s0, c, p)
        if fx * s0.x + fy * s0.y > 0.0:
            return Trajectory(
                t=np.array([0.0]), x=np.array([s0.x]), y=np.array([s0.y]),
                ue=np.array([c.u_e]), up=np.array([c.u_p]), T=0.0,
            )

    T = None
    for k in range(n_steps):
        if k % n_e == 0 or k % n_p == 0:
            cand, _ = select_controls(s, m, cfg.policy)
            if k % n_e == 0:
                held_e = cand.u_e
            if k % n_p == 0:
                held_p = cand.u_p
        c = Controls(held_e, held_p)
        ues.append(c.u_e)
        ups.append(c.u_p)
        s_next = rk4_step(s, c, cfg.dt, p)
        hit = boundary_crossing(s, s_next, c, p)
        if hit is not None:
            theta, s_cross = hit
            T = k * cfg.dt + theta * cfg.dt
            ts.append(T)
            xs.append(s_cross.x)
            ys.append(s_cross.y)
            ues.append(c.u_e)
            ups.append(c.u_p)
            break
        s = s_next
        ts.append((k + 1) * cfg.dt)
        xs.append(s.x)
        ys.append(s.y)
    else:
        ues.append(held_e)
        ups.append(held_p)

    return Trajectory(
        t=np.array(ts), x=np.array(xs), y=np.array(ys),
        ue=np.array(ues), up=np.array(ups), T=T,
    )


def game_time_table(
    s0: State,
    m: MlpModel,
    pairs: list[tuple[float, float]],
    p: GameParams,
    *,
    dt: float = 1e-3,
    t_max: float = 20.0,
    policy: Optional[SelectionPolicy] = None,
) -> list[tuple[float, float, Optional[float]]]:
    """Game times for a list of (delta_e, delta_p) sampling-period pairs."""
    policy = policy or SelectionPolicy()
    out = []
    for de, dp in pairs:
        cfg = SampleHoldConfig(delta_e=de, delta_p=dp, dt=dt, t_max=t_max, policy=policy)
        tr = simulate(s0, m, cfg, p)
        out.append((de, dp, tr.T))
    return out


TRAJECTORY_HEADER = "t,x,y,ue,up"


def trajectory_export(tr: Trajectory, path) -> None:
    try:
        with open(path, "w") as f:
            f.write(TRAJECTORY_HEADER + "\n")
            for row in zip(tr.t, tr.x, tr.y, tr.ue, tr.up):
                f.write(",".join("%.17g" % c for c in row) + "\n")
    except OSError as exc:
        raise OSError(f"failed to write trajectory to {path}: {exc}") from exc


def trajectory_load(path) -> Trajectory:
    with open(path) as f:
        header = f.readline().strip()
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"unexpected trajectory header {header!r}")
        rows = np.loadtxt(f, delimiter=",", ndmin=2)
    return Trajectory(t=rows[:, 0], x=rows[:, 1], y=rows[:, 2],
                      ue=rows[:, 3], up=rows[:, 4], T=None)
