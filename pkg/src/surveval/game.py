"""Game definition: parameters, frames, relative dynamics, integration.

The game is played in an evader-centric frame: the evader sits at the
origin heading up the y-axis, and the state is the pursuer's relative
position.  Surveillance holds while the pursuer stays within distance
``rho``; the evader wins by crossing that circle outward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to the principal interval (-pi, pi]."""
    r = a % TWO_PI
    if r > math.pi:
        r -= TWO_PI
    return r


class DegenerateCrossing(Exception):
    """Boundary reached without outward motion (tangential grazing)."""


@dataclass(frozen=True)
class GameParams:
    """Physical constants of one game instance.

    The evader is faster but turn-rate limited; the pursuer is slower but
    can head anywhere instantaneously.
    """

    v_e: float = 1.5
    v_p: float = 1.0
    omega_e: float = 1.0
    rho: float = 1.0

    def __post_init__(self):
        for name in ("v_e", "v_p", "omega_e", "rho"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.v_p < self.v_e:
            raise ValueError("the evader must be faster than the pursuer (v_p < v_e)")


@dataclass(frozen=True)
class State:
    """Pursuer position in the evader-centric frame."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("state components must be finite")

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def in_game_set(self, params: GameParams) -> bool:
        return self.norm() <= params.rho


@dataclass(frozen=True)
class Controls:
    """Evader normalized turn rate and pursuer relative heading.

    ``u_p`` is wrapped to (-pi, pi] on construction.
    """

    u_e: float
    u_p: float

    def __post_init__(self):
        if not -1.0 <= self.u_e <= 1.0:
            raise ValueError(f"u_e must lie in [-1, 1], got {self.u_e}")
        object.__setattr__(self, "u_p", wrap_angle(self.u_p))


@dataclass(frozen=True)
class InertialStates:
    """Inertial evader pose (x, y, heading) and pursuer position."""

    xi_e: tuple[float, float, float]
    xi_p: tuple[float, float]

    def __post_init__(self):
        xe, ye, theta = self.xi_e
        object.__setattr__(self, "xi_e", (xe, ye, wrap_angle(theta)))


def dynamics(s: State, c: Controls, p: GameParams) -> tuple[float, float]:
    """Relative-frame velocity of the pursuer position."""
    fx = -p.omega_e * s.y * c.u_e + p.v_p * math.sin(c.u_p)
    fy = p.omega_e * s.x * c.u_e - p.v_e + p.v_p * math.cos(c.u_p)
    return fx, fy


def to_evader_frame(inertial: InertialStates) -> State:
    """Rotate the pursuer's inertial offset into the evader-centric frame."""
    xe, ye, theta = inertial.xi_e
    xp, yp = inertial.xi_p
    dx, dy = xp - xe, yp - ye
    ct, st = math.cos(theta), math.sin(theta)
    return State(ct * dx - st * dy, st * dx + ct * dy)


def rk4_step(s: State, c: Controls, dt: float, p: GameParams) -> State:
    """One classical Runge-Kutta step with controls held constant."""
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    k1 = dynamics(s, c, p)
    k2 = dynamics(State(s.x + 0.5 * dt * k1[0], s.y + 0.5 * dt * k1[1]), c, p)
    k3 = dynamics(State(s.x + 0.5 * dt * k2[0], s.y + 0.5 * dt * k2[1]), c, p)
    k4 = dynamics(State(s.x + dt * k3[0], s.y + dt * k3[1]), c, p)
    return State(
        s.x + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s.y + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    )


def boundary_crossing(
    s_prev: State, s_next: State, c: Controls, p: GameParams
) -> Optional[tuple[float, State]]:
    """Locate the outward boundary crossing on the step chord, if any.

    Returns ``(theta, state)`` with ``theta`` the sub-step fraction in
    [0, 1] and ``state`` on the circle to within 1e-9, or ``None`` when
    the step stays inside.  Bisection runs on the linear interpolant of
    the step endpoints, which is accurate to O(dt^2) for the small fixed
    steps used here.

    Raises :class:`DegenerateCrossing` when the located point violates
    the outward condition f(s, c)^T s > 0 (tangential grazing); callers
    should retry with a smaller integration step.
    """
    rho = p.rho
    if s_next.norm() <= rho:
        return None

    def g(theta: float) -> float:
        x = s_prev.x + theta * (s_next.x - s_prev.x)
        y = s_prev.y + theta * (s_next.y - s_prev.y)
        return math.hypot(x, y) - rho

    lo, hi = 0.0, 1.0
    # g(0) <= 0 < g(1); 80 halvings put the bracket far below the target tol
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    theta = 0.5 * (lo + hi)
    s_cross = State(
        s_prev.x + theta * (s_next.x - s_prev.x),
        s_prev.y + theta * (s_next.y - s_prev.y),
    )
    if abs(s_cross.norm() - rho) > 1e-9:
        raise DegenerateCrossing(
            f"crossing localization failed, residual {s_cross.norm() - rho:.3e}"
        )
    fx, fy = dynamics(s_cross, c, p)
    if fx * s_cross.x + fy * s_cross.y <= 0.0:
        raise DegenerateCrossing(
            f"boundary reached without outward motion at ({s_cross.x}, {s_cross.y})"
        )
    return theta, s_cross
