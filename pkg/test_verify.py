"""Self-distance, embeddedness, metrics and the homotopy certificate."""

import numpy as np
import pytest

from prescurv.core.curves import CurvatureSpec, Domain, ParamCurve
from prescurv.core.errors import BadPreset, DomainMismatch
from prescurv.core import verify
from prescurv.core.presets import circle, fourier_knot, helix, torus_knot
from prescurv.core.verify import curve_metrics, homotopy_certificate, is_embedded, min_self_distance


def doubled_circle(count: int = 512) -> ParamCurve:
    domain = Domain("circle", 0.0, 4 * np.pi)
    t = domain.grid(count)
    return ParamCurve(domain, np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1))


def test_circle_self_distance_with_separation():
    d = min_self_distance(circle(count=256), separation=1.0)
    assert 2 * np.sin(0.5) - 1e-9 <= d <= 2 * np.sin(0.5) + 0.02


def test_round_circle_has_no_close_approach():
    assert min_self_distance(circle(count=256)) >= 2.0 - 1e-6
    assert is_embedded(circle(count=256))


def test_trefoil_is_embedded():
    assert is_embedded(torus_knot(count=512))


def test_doubled_circle_is_not_embedded():
    f = doubled_circle()
    assert min_self_distance(f) < 1e-9
    assert not is_embedded(f)


def test_metrics_of_an_exact_curve():
    f = helix(a=1.0, b=0.5, count=1024)
    metrics = curve_metrics(f, CurvatureSpec.constant(f.domain, 0.8), f, pinned=(1.0,))
    assert metrics.curvature_sup < 1e-5
    assert metrics.speed_deviation < 1e-6
    assert metrics.c1_distance == 0.0
    assert metrics.tangency == {"1": 0.0}
    assert metrics.min_self_distance is None
    assert set(metrics.to_dict()) == {"curvature_sup", "curvature_l2", "speed_deviation",
                                      "c1_distance", "tangency", "min_self_distance"}


def test_closed_curve_metrics_carry_self_distance():
    f = torus_knot(count=512)
    metrics = curve_metrics(f, CurvatureSpec.constant(f.domain, 1.0), unit_speed=False)
    assert metrics.min_self_distance > 0
    assert metrics.c1_distance is None


def test_certificate_of_identical_knots():
    f = torus_knot(count=512)
    certificate = homotopy_certificate(f, f, steps=5)
    assert certificate["ok"]
    assert len(certificate["steps"]) == 5
    assert all(step["immersed"] and step["injective"] for step in certificate["steps"])


def test_certificate_fails_through_a_crossing():
    g = circle(count=256)
    # the straight-line homotopy to the antipodal circle passes through a point
    g_flipped = g.with_samples(-g.samples)
    certificate = homotopy_certificate(g, g_flipped, steps=21)
    assert not certificate["ok"]
    assert not certificate["steps"][10]["immersed"]


def test_certificate_needs_matching_domains():
    with pytest.raises(DomainMismatch):
        homotopy_certificate(circle(count=64), helix(count=64))


def uneven_circle(count: int = 64, squeeze: float = 0.9) -> ParamCurve:
    # samples crowd where the angle advances slowly
    domain = Domain("circle", 0.0, 2 * np.pi)
    t = domain.grid(count)
    angle = t + squeeze * np.sin(t)
    return ParamCurve(domain, np.stack([np.cos(angle), np.sin(angle), np.zeros_like(t)], axis=1))


def exhaustive_self_distance(f: ParamCurve, separation: float) -> float:
    t = verify._check_params(f)
    points = f.evaluate(t)
    s, total = verify._arclength(f, t)
    gap = np.abs(s[:, None] - s[None, :])
    gap = np.minimum(gap, total - gap)
    distances = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    return float(distances[gap > separation].min())


def test_self_distance_matches_exhaustive_search_on_uneven_samples():
    f = uneven_circle()
    for separation in (0.3, 0.6, 1.2):
        expected = exhaustive_self_distance(f, separation)
        assert min_self_distance(f, separation) == pytest.approx(expected, rel=1e-12)
        assert expected >= 2 * np.sin(separation / 2) - 1e-4


def test_fourier_knot_is_embedded_and_seeded():
    first = fourier_knot(seed=4, count=256)
    assert is_embedded(first)
    assert np.array_equal(first.samples, fourier_knot(seed=4, count=256).samples)
    assert not np.array_equal(first.samples, fourier_knot(seed=5, count=256).samples)


def test_fourier_knot_without_embedded_perturbation(monkeypatch):
    monkeypatch.setattr(verify, "is_embedded", lambda curve: False)
    with pytest.raises(BadPreset):
        fourier_knot(seed=1, count=128)
