"""Partition of unity, barycentric coefficients and the density reparametrization."""

import numpy as np
import pytest

from prescurv.core import quadrature
from prescurv.core.curves import Domain, average, tantrix
from prescurv.core.density import (
    DensityFamily, PartitionOfUnity, barycentric_coeffs, build_density_family, build_pou, density,
    node_points, reparam_family, smoothstep, smoothstep_derivative,
)
from prescurv.core.errors import BadK, DegenerateCurve, InfeasibleMargin, OutsideBall
from prescurv.core.presets import torus_knot


def knot_piece_tantrix(t1: float = 1.0, count: int = 257):
    return tantrix(torus_knot(count=1024).restrict(0.0, t1, count))


def ball_points(family: DensityFamily, count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((count, family.x0.size))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = family.R * rng.uniform(0.0, 1.0, count) ** (1 / family.x0.size)
    return family.x0 + directions * radii[:, None]


def test_smoothstep_ends_and_symmetry():
    x = np.linspace(0.0, 1.0, 101)
    s = smoothstep(x)
    assert s[0] == 0.0 and s[-1] == pytest.approx(1.0, abs=1e-12)
    assert smoothstep(np.array([0.5]))[0] == pytest.approx(0.5, abs=1e-12)
    assert np.all(np.diff(s) >= 0)
    assert np.allclose(s + smoothstep(1 - x), 1.0, atol=1e-12)
    d = smoothstep_derivative(np.array([0.0, 1.0, -0.5, 1.5]))
    assert np.all(d == 0.0)


def test_smoothstep_derivative_matches_difference_quotient():
    x = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    numeric = (smoothstep(x + h) - smoothstep(x - h)) / (2 * h)
    assert np.allclose(smoothstep_derivative(x), numeric, atol=1e-6)


@pytest.mark.parametrize("k", [4, 8, 11])
def test_partition_of_unity(k):
    pou = PartitionOfUnity(Domain("interval", 0.0, 2.0), k)
    t = np.linspace(0.0, 2.0, 1001)
    thetas = pou.thetas(t)
    assert thetas.shape == (1001, k)
    assert np.allclose(thetas.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(thetas >= 0)
    assert np.allclose(pou.integrals, 1.0 / k, atol=1e-12)
    lo, hi = pou.support(1)
    outside = (t < lo) | (t > hi)
    assert np.all(np.abs(pou.theta(1, t)[outside]) < 1e-12)


def test_build_pou_needs_k_above_dimension():
    with pytest.raises(BadK):
        build_pou(Domain(), 3, ambient_dim=3)


def test_barycentric_suite():
    rng = np.random.default_rng(42)
    for trial in range(100):
        nodes = rng.standard_normal((8, 3))
        family = DensityFamily.from_nodes(nodes)
        assert family.R > 0
        assert np.allclose(barycentric_coeffs(family, family.x0), 1 / 8, atol=1e-12)
        for x in ball_points(family, 10, seed=trial):
            c = barycentric_coeffs(family, x)
            assert abs(c.sum() - 1.0) <= 1e-12
            assert np.linalg.norm(c @ nodes - x) <= 1e-10
            assert np.all(c > 0)


def test_positivity_on_many_ball_points():
    nodes = np.random.default_rng(7).standard_normal((8, 3))
    family = DensityFamily.from_nodes(nodes)
    coeffs = np.array([barycentric_coeffs(family, x) for x in ball_points(family, 1000)])
    assert np.all(coeffs > 0)


def test_coplanar_nodes_are_degenerate():
    nodes = np.column_stack([np.random.default_rng(1).standard_normal((8, 2)), np.ones(8)])
    with pytest.raises(DegenerateCurve):
        DensityFamily.from_nodes(nodes)


def test_points_outside_the_ball_are_rejected():
    family = DensityFamily.from_nodes(np.random.default_rng(2).standard_normal((8, 3)))
    with pytest.raises(OutsideBall):
        barycentric_coeffs(family, family.x0 + np.array([2 * family.R, 0.0, 0.0]))


def test_node_points_average_to_the_tantrix_average():
    T = knot_piece_tantrix()
    pou = build_pou(T.domain, 8)
    nodes = node_points(T, pou)
    assert np.linalg.norm(nodes.mean(axis=0) - average(T)) < 1e-12


def test_family_radius_bounds():
    T = knot_piece_tantrix()
    vtilde = lambda t: 2.0 * T.speed(t) + 1.0
    family = build_density_family(T, vtilde=vtilde)
    assert {"positivity", "hull", "lambda", "speed"} <= set(family.radius_bounds)
    assert 0 < family.R < min(family.radius_bounds.values())


def test_center_reparametrization_is_identity():
    T = knot_piece_tantrix()
    family = build_density_family(T)
    Tbar, phi = reparam_family(T, family, family.x0)
    t = T.dense_params(2)
    assert np.max(np.abs(phi.evaluate(t) - t)) < 1e-9
    assert np.max(np.linalg.norm(Tbar.samples - T.samples, axis=1)) < 1e-8


def test_density_steers_the_average():
    T = knot_piece_tantrix()
    family = build_density_family(T)
    k = family.k
    for x in ball_points(family, 25, seed=5):
        rho = density(family, x)
        assert rho.lam / k == pytest.approx(1.0, abs=1e-10)
        weighted = quadrature.integrate(lambda t: rho(t)[:, None] * T.evaluate(t), T.edges)
        assert np.linalg.norm(weighted / T.domain.length - rho.lam / k * x) < 1e-8
        Tbar, phi = reparam_family(T, family, x)
        assert np.linalg.norm(average(Tbar) - x) < family.R / 2
        assert np.all(np.diff(phi.samples) > 0)


def test_tetrahedron_coefficients():
    nodes = np.vstack([np.eye(3), -np.ones((1, 3))])
    family = DensityFamily.from_nodes(nodes)
    assert np.allclose(family.x0, 0.0, atol=1e-15)
    assert family.R > 0.1
    c = barycentric_coeffs(family, [0.1, 0.0, 0.0])
    assert np.allclose(c, [0.325, 0.225, 0.225, 0.225], atol=1e-12)


def test_speed_bound_is_pointwise():
    T = knot_piece_tantrix()
    t = T.dense_params(2)
    speeds = T.speed(t)
    # target 10% above a varying speed: the global extremes do not separate
    assert speeds.max() > 1.1 * speeds.min()
    family = build_density_family(T, vtilde=lambda s: 1.1 * T.speed(s))
    bounds = family.radius_bounds
    assert bounds["speed"] == pytest.approx((1 - 1 / 1.1) * bounds["positivity"], rel=1e-9)
    assert family.R > 0


def test_target_equal_to_tantrix_speed_is_infeasible():
    T = knot_piece_tantrix()
    with pytest.raises(InfeasibleMargin):
        build_density_family(T, vtilde=T.speed)
