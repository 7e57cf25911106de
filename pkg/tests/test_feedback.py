import math

import numpy as np
import pytest

from surveval.feedback import (
    SelectionPolicy,
    ZeroGradient,
    evader_feedback,
    pursuer_feedback,
    select_controls,
    selection_set,
)
from surveval.game import State


def test_evader_feedback_signs():
    assert evader_feedback((1, 0), State(0, 1)) == (1.0, False)
    assert evader_feedback((0, 1), State(1, 0)) == (-1.0, False)
    ue, singular = evader_feedback((0, 2), State(0, -1))
    assert singular and ue == 0.0


def test_pursuer_feedback_values():
    assert pursuer_feedback((0, 1)) == 0.0
    assert pursuer_feedback((1, 0)) == pytest.approx(math.pi / 2)
    assert pursuer_feedback((0, -1)) == pytest.approx(math.pi)
    with pytest.raises(ZeroGradient):
        pursuer_feedback((0.0, 0.0))


def test_feedback_beats_exhaustive_grids(params, rng):
    # brute-force oracle: the analytic laws must win every grid comparison
    ue_grid = np.linspace(-1, 1, 201)
    up_grid = -math.pi + 2 * math.pi * (np.arange(3600) + 1) / 3600
    for _ in range(300):
        gx, gy = rng.normal(0, 1, 2)
        x, y = rng.uniform(-1, 1, 2)
        ue, singular = evader_feedback((gx, gy), State(x, y))
        coeff = (gy * x - gx * y) * params.omega_e
        if not singular:
            assert coeff * ue <= (coeff * ue_grid).min() + 1e-15
        obj = gx * np.sin(up_grid) + gy * np.cos(up_grid)
        up = pursuer_feedback((gx, gy))
        assert gx * math.sin(up) + gy * math.cos(up) >= obj.max() - 1e-12


def test_feedback_scale_invariance(rng):
    for _ in range(100):
        gx, gy = rng.normal(0, 1, 2)
        x, y = rng.uniform(-1, 1, 2)
        kappa = rng.uniform(0.1, 50)
        assert evader_feedback((gx, gy), State(x, y)) == evader_feedback(
            (kappa * gx, kappa * gy), State(x, y)
        )
        assert pursuer_feedback((gx, gy)) == pytest.approx(
            pursuer_feedback((kappa * gx, kappa * gy)), abs=1e-12
        )


def test_feedback_mirror_antisymmetry(rng):
    for _ in range(200):
        gx, gy = rng.normal(0, 1, 2)
        x, y = rng.uniform(0.05, 1, 2)
        ue, singular = evader_feedback((gx, gy), State(x, y))
        if singular:
            continue
        ue_m, _ = evader_feedback((-gx, gy), State(-x, y))
        assert ue_m == -ue
        up = pursuer_feedback((gx, gy))
        up_m = pursuer_feedback((-gx, gy))
        if abs(abs(up) - math.pi) > 1e-12:
            assert up_m == pytest.approx(-up)


def test_policy_validation():
    with pytest.raises(ValueError):
        SelectionPolicy(mode="nearest")
    with pytest.raises(ValueError):
        SelectionPolicy(eps=0.0)


def test_select_controls_off_axis_singleton(quick_model):
    chosen, cands = select_controls(State(0.5, -0.5), quick_model, SelectionPolicy())
    assert len(cands) == 1
    assert cands[0] == chosen
    assert -1.0 <= chosen.u_e <= 1.0
    assert -math.pi < chosen.u_p <= math.pi


def test_select_controls_on_axis_two_sided(quick_model):
    chosen, cands = select_controls(State(0.0, 0.5), quick_model, SelectionPolicy())
    assert len(cands) == 2
    left, right = cands
    # trained field: opposite turn signs and mirrored pursuer headings
    assert left.u_e * right.u_e < 0
    assert abs(left.u_p + right.u_p) <= 0.1
    assert chosen in cands


def test_select_controls_limit_policies(quick_model):
    s = State(0.0, 0.5)
    left, _ = select_controls(s, quick_model, SelectionPolicy(mode="left-limit"))
    right, _ = select_controls(s, quick_model, SelectionPolicy(mode="right-limit"))
    l2, r2 = select_controls(s, quick_model, SelectionPolicy())[1]
    assert left == l2
    assert right == r2


def test_selection_set_adds_surface_value(quick_model):
    s = State(0.0, 0.5)
    sel = selection_set(s, quick_model, SelectionPolicy())
    assert len(sel) == 3
    off = selection_set(State(0.4, 0.1), quick_model, SelectionPolicy())
    assert len(off) == 1


def test_select_controls_analytic_mode(quick_model):
    chosen, cands = select_controls(
        State(0.5, -0.5), quick_model, SelectionPolicy(mode="analytic-from-gradient")
    )
    assert len(cands) == 1
    assert chosen.u_e in (-1.0, 0.0, 1.0)
