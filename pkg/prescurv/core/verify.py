"""Acceptance metrics for output curves: curvature error, speed, embeddedness, isotopy evidence."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from prescurv.core import quadrature
from prescurv.core.curves import CurvatureSpec, ParamCurve, c1_distance, curvature_at
from prescurv.core.errors import DomainMismatch

logger = logging.getLogger(__name__)

# Curves are inspected on at most this many points
MAX_CHECK_POINTS = 20_000

NEIGHBOURS = 16


def _check_params(f: ParamCurve, refine: int = 2) -> np.ndarray:
    t = f.dense_params(refine)
    if len(t) > MAX_CHECK_POINTS:
        t = t[np.unique(np.linspace(0, len(t) - 1, MAX_CHECK_POINTS).astype(int))]
    return t


def _arclength(f: ParamCurve, t: np.ndarray) -> tuple[np.ndarray, float]:
    edges = np.append(t, f.domain.b) if f.domain.periodic else t
    running = quadrature.cumulative(f.speed, edges)
    return running[: len(t)], float(running[-1])


def min_self_distance(f: ParamCurve, separation: float | None = None) -> float:
    """Smallest distance between samples more than `separation` apart in arclength.

    The default separation is pi / max curvature, below which two points of a
    regular curve cannot meet without the curve doubling back.
    """
    t = _check_params(f)
    points = f.evaluate(t)
    s, total = _arclength(f, t)
    if separation is None:
        separation = np.pi / float(np.max(curvature_at(f, t)))
    if separation >= (0.5 * total if f.domain.periodic else total):
        return np.inf

    def far_apart(i, j):
        gap = np.abs(s[i] - s[j])
        if f.domain.periodic:
            gap = np.minimum(gap, total - gap)
        return gap > separation

    tree = cKDTree(points)

    def closest_far_pair(radius: float) -> float:
        """Exact minimum over far pairs within `radius`; inf when there are none."""
        pairs = tree.query_pairs(radius, output_type="ndarray")
        if not len(pairs):
            return np.inf
        near = pairs[far_apart(pairs[:, 0], pairs[:, 1])]
        if not len(near):
            return np.inf
        return float(np.linalg.norm(points[near[:, 0]] - points[near[:, 1]], axis=1).min())

    k = min(NEIGHBOURS, len(points))
    distances, index = tree.query(points, k=k)
    rows = np.repeat(np.arange(len(points)), k)
    mask = far_apart(rows, index.ravel())
    if np.any(mask):
        # neighbour lists can miss closer far pairs on uneven samples
        candidate = float(distances.ravel()[mask].min())
        return min(candidate, closest_far_pair(candidate))

    radius = float(distances[:, -1].max())
    while True:
        radius *= 2.0
        found = closest_far_pair(radius)
        if np.isfinite(found):
            return found
        if radius > 4 * np.ptp(points, axis=0).max():
            return np.inf


def diameter(f: ParamCurve) -> float:
    points = f.samples
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


def is_embedded(f: ParamCurve, rel_threshold: float = 1e-2) -> bool:
    return min_self_distance(f) > rel_threshold * diameter(f)


@dataclass
class Metrics:
    curvature_sup: float
    curvature_l2: float
    speed_deviation: float
    c1_distance: float | None = None
    tangency: dict = field(default_factory=dict)
    min_self_distance: float | None = None

    def to_dict(self) -> dict:
        return {key: value for key, value in self.__dict__.items()}


def curve_metrics(f_tilde: ParamCurve, kappa_tilde: CurvatureSpec, f: ParamCurve | None = None,
                  pinned=(), unit_speed: bool = True) -> Metrics:
    """Relative curvature error against the target, speed and distance checks.

    With `unit_speed` false the speed deviation is taken relative to the mean
    speed instead of to 1.
    """
    t = _check_params(f_tilde)
    kappa = curvature_at(f_tilde, t)
    target = kappa_tilde.evaluate(t)
    rel = np.abs(kappa - target) / target
    speeds = f_tilde.speed(t)
    reference = 1.0 if unit_speed else float(np.mean(speeds))
    metrics = Metrics(
        curvature_sup=float(rel.max()),
        curvature_l2=float(np.sqrt(np.mean(rel ** 2))),
        speed_deviation=float(np.max(np.abs(speeds - reference)) / reference),
    )
    if f is not None:
        metrics.c1_distance = c1_distance(f_tilde, f)
        for p in pinned:
            value = float(np.linalg.norm(f_tilde.evaluate(p) - f.evaluate(p)))
            slope = float(np.linalg.norm(f_tilde.derivative(p) - f.derivative(p)))
            metrics.tangency[f"{p:.12g}"] = max(value, slope)
    if f_tilde.domain.periodic:
        metrics.min_self_distance = min_self_distance(f_tilde)
    logger.info("[verify] curvature sup %.3e, speed %.3e", metrics.curvature_sup, metrics.speed_deviation)
    return metrics


def homotopy_certificate(g: ParamCurve, g_tilde: ParamCurve, steps: int = 20,
                         rel_threshold: float = 1e-3) -> dict:
    """Sample h_s = (1 - s) g + s g_tilde and check injectivity and immersion at each s."""
    if not g.domain.matches(g_tilde.domain):
        raise DomainMismatch(f"Domains differ: {g.domain} vs {g_tilde.domain}")
    finer = g if g.count >= g_tilde.count else g_tilde
    t = _check_params(finer)
    kmax = max(float(np.max(curvature_at(g, t))), float(np.max(curvature_at(g_tilde, t))))
    separation = np.pi / kmax
    base_slope, target_slope = g.derivative(t), g_tilde.derivative(t)
    scale = max(diameter(g), diameter(g_tilde))
    grid = finer.params
    start, end = g.evaluate(grid), g_tilde.evaluate(grid)

    samples = []
    for s in np.linspace(0.0, 1.0, steps):
        h = ParamCurve(g.domain, (1 - s) * start + s * end, g.smoothness_order)
        min_speed = float(np.min(np.linalg.norm((1 - s) * base_slope + s * target_slope, axis=1)))
        distance = min_self_distance(h, separation)
        samples.append({
            "s": float(s),
            "min_distance": distance,
            "min_speed": min_speed,
            "injective": bool(distance > rel_threshold * scale),
            "immersed": bool(min_speed > 0),
        })
    ok = all(item["injective"] and item["immersed"] for item in samples)
    logger.info("[verify] homotopy certificate over %d steps: %s", steps, "ok" if ok else "FAILED")
    return {"ok": ok, "steps": samples, "separation": separation}
