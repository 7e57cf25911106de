"""Optimal feedback laws and control selection near the feedback discontinuity.

The analytic laws read the value gradient: the evader's turn is the sign of
the switching value grad_x*y - grad_y*x, and the pursuer heads along the
gradient direction.  Both are set-valued on the y-axis, where the gradient
jumps; ``select_controls`` exposes the two one-sided candidates there and a
policy picks one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .game import State, wrap_angle
from .mlp import MlpModel, forward

MODES = ("network-direct", "left-limit", "right-limit", "analytic-from-gradient")


class ZeroGradient(Exception):
    """Pursuer feedback is undefined for a vanishing gradient."""


@dataclass(frozen=True)
class SelectionPolicy:
    """How to pick a control where the feedback is set-valued.

    ``mode`` chooses the source (network control head or analytic formulas
    on the network gradient head) and the tie-break on the axis;
    ``eps`` is the axis-proximity threshold.
    """

    mode: str = "network-direct"
    eps: float = 1e-3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.eps > 0.0:
            raise ValueError("eps must be positive")


def evader_feedback(grad, s: State) -> tuple[float, bool]:
    """Sign of the switching value, with a singularity flag.

    Returns (u_e, singular); u_e is 0 when the switching value vanishes to
    within 1e-12, in which case every admissible turn rate is optimal.
    """
    gx, gy = grad
    if not (math.isfinite(gx) and math.isfinite(gy)):
        raise ValueError("gradient must be finite")
    sw = gx * s.y - gy * s.x
    if abs(sw) <= 1e-12:
        return 0.0, True
    return (1.0 if sw > 0.0 else -1.0), False


def pursuer_feedback(grad) -> float:
    """Gradient-aligned pursuer heading, principal value."""
    gx, gy = grad
    if gx == 0.0 and gy == 0.0:
        raise ZeroGradient("pursuer feedback undefined at zero gradient")
    return math.atan2(gx, gy)


@dataclass(frozen=True)
class ControlCandidate:
    u_e: float
    u_p: float
    singular: bool = False


def _candidate_at(s: State, m: MlpModel, mode: str) -> ControlCandidate:
    v, dv, u = forward(m, (s.x, s.y))
    if mode == "analytic-from-gradient":
        ue, singular = evader_feedback(dv, s)
        up = pursuer_feedback(dv) if (dv[0] or dv[1]) else 0.0
        return ControlCandidate(ue, up, singular)
    return ControlCandidate(min(1.0, max(-1.0, float(u[0]))), wrap_angle(float(u[1])))


def select_controls(
    s: State, m: MlpModel, policy: SelectionPolicy
) -> tuple[ControlCandidate, list[ControlCandidate]]:
    """Selected control pair and the full candidate set at a state.

    Off the y-axis the candidate set is a singleton from the policy's
    source.  Within ``eps`` of the axis the candidates are the two
    one-sided evaluations at (-eps, y) and (+eps, y), and the policy picks
    one: left-/right-limit take their side; the network-direct and
    analytic policies commit to the side their own evaluation at the state
    leans toward (ties break to the right).  Committing to a side matters:
    the interpolated control at the discontinuity would hold the state on
    the axis artificially.
    """
    if abs(s.x) > policy.eps:
        cand = _candidate_at(s, m, policy.mode)
        return cand, [cand]
    left = _candidate_at(State(-policy.eps, s.y), m, policy.mode)
    right = _candidate_at(State(policy.eps, s.y), m, policy.mode)
    if policy.mode == "left-limit":
        chosen = left
    elif policy.mode == "right-limit":
        chosen = right
    else:
        lean = _candidate_at(s, m, policy.mode).u_e
        chosen = left if lean > 0.0 else right
    return chosen, [left, right]


def selection_set(
    s: State, m: MlpModel, policy: SelectionPolicy
) -> list[ControlCandidate]:
    """Closure of the sample-and-hold selection set at a state.

    Off the axis this is the same singleton as ``select_controls``.  On the
    axis it adds the source's evaluation at the state itself to the two
    one-sided limits: a sampled player sitting on the discontinuity may
    hold exactly that interpolated value, and the one-interval gain/loss
    optimizations range over every selection the opponent might be caught
    holding.
    """
    chosen, cands = select_controls(s, m, policy)
    if len(cands) == 1:
        return cands
    return cands + [_candidate_at(s, m, policy.mode)]
