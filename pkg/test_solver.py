"""Ball-confined solve of F(x) = target, with radius shrinking on side-condition failures."""

import json

import numpy as np
import pytest

from prescurv.core.curves import tantrix
from prescurv.core.density import build_density_family
from prescurv.core.errors import NegativeCoefficient, NoConvergence, RTooLarge, RUnderflow, TantrixEscape
from prescurv.core.presets import torus_knot
from prescurv.core.solver import AverageMap, BallSpec, shrink_R, solve_average_constraint

ORIGIN = np.zeros(3)


def translation(offset):
    offset = np.asarray(offset, dtype=float)
    return lambda x, R: np.asarray(x, dtype=float) + offset


def test_ball_spec():
    ball = BallSpec(ORIGIN, 0.5)
    assert ball.contains([0.3, 0.0, 0.4])
    assert not ball.contains([0.6, 0.0, 0.0])
    clamped = ball.clamp([2.0, 0.0, 0.0])
    assert ball.contains(clamped) and clamped[0] > 0.49
    assert np.array_equal(ball.clamp([0.1, 0.0, 0.0]), [0.1, 0.0, 0.0])
    with pytest.raises(ValueError):
        BallSpec(ORIGIN, 0.0)


def test_fixed_center_needs_no_iterations():
    report = solve_average_constraint(BallSpec(ORIGIN, 1.0), ORIGIN, lambda x, R: np.asarray(x))
    assert report.iterations == 0
    assert report.residual == 0.0
    assert report.evaluations == 1


def test_translation_is_solved_in_one_step():
    report = solve_average_constraint(BallSpec(ORIGIN, 1.0), ORIGIN, translation([0.1, -0.05, 0.0]))
    assert report.iterations <= 3
    assert report.residual <= 1e-12
    assert np.allclose(report.x_star, [-0.1, 0.05, 0.0], atol=1e-12)
    assert report.method == "fixed_point"


def test_contraction_converges():
    target = np.array([0.2, 0.1, -0.3])
    c = np.array([0.05, 0.0, 0.0])
    F = lambda x, R: 0.5 * np.asarray(x) + c
    report = solve_average_constraint(BallSpec(ORIGIN, 1.0), target, F, tol=1e-10)
    assert report.residual <= 1e-10
    assert np.allclose(report.x_star, 2 * (target - c), atol=1e-9)


def test_shrink_halves_radius():
    ball = shrink_R(BallSpec(ORIGIN, 0.2), "test")
    assert ball.R == pytest.approx(0.1)
    assert np.array_equal(ball.x0, ORIGIN)
    with pytest.raises(RUnderflow):
        shrink_R(BallSpec(ORIGIN, 0.2), "test", floor=0.15)


def test_side_condition_failure_restarts_smaller():
    inner = translation([0.05, 0.0, 0.0])

    def F(x, R):
        if R > 0.3:
            raise NegativeCoefficient("ball too large")
        return inner(x, R)

    report = solve_average_constraint(BallSpec(ORIGIN, 1.0), ORIGIN, F)
    assert report.R_history == [1.0, 0.5, 0.25]
    assert report.condition_flags == ["negative_coefficient", "negative_coefficient"]
    assert report.residual <= 1e-12


def test_persistent_failure_underflows():
    def F(x, R):
        raise RTooLarge("always")

    with pytest.raises(RUnderflow):
        solve_average_constraint(BallSpec(ORIGIN, 1.0), ORIGIN, F)


def test_unreachable_target_reports_no_convergence():
    with pytest.raises(NoConvergence) as info:
        solve_average_constraint(BallSpec(ORIGIN, 1.0), ORIGIN, translation([5.0, 0.0, 0.0]), max_iter=50)
    report = info.value.report
    assert report is not None
    assert report.residual >= 4.0 - 1e-9
    assert "fixed_point_stalled" in report.condition_flags
    assert report.method == "simplex"
    json.dumps(report.to_dict())


def test_escaping_tantrix_restarts_smaller():
    def F(x, R):
        if R > 0.6:
            raise TantrixEscape("loops leave the neighbourhood")
        return np.asarray(x)

    report = solve_average_constraint(BallSpec(ORIGIN, 1.0), ORIGIN, F)
    assert report.R_history == [1.0, 0.5]
    assert report.condition_flags == ["tantrix_escape"]


@pytest.mark.slow
def test_average_map_on_a_knot_piece():
    T = tantrix(torus_knot(count=1024).restrict(0.0, 1.0, 257))
    vtilde = lambda t: 2.0 * T.speed(t)
    family = build_density_family(T, vtilde=vtilde)
    R = family.R
    F = AverageMap(T, family, vtilde)

    rng = np.random.default_rng(11)
    offsets = rng.standard_normal((2, 3))
    offsets *= 0.8 * R / np.linalg.norm(offsets, axis=1, keepdims=True)
    for x in [family.x0, *(family.x0 + offsets)]:
        value = F(x, R)
        assert np.linalg.norm(value - x) < R

        Tbar, Ttilde = F.last["Tbar"], F.last["curve"]
        drift = np.linalg.norm(Ttilde.samples - Tbar.evaluate(Ttilde.params), axis=1)
        assert drift.max() < R / 2
        for piece in F.last["pieces"]:
            assert piece["length"] == pytest.approx(piece["target"], rel=1e-8)
            assert piece["max_distance"] < R / 4
            assert piece["speed_error"] <= 1e-6

    strict = AverageMap(T, family, vtilde, image_limit=1e-9)
    with pytest.raises(TantrixEscape):
        strict(family.x0, R)
