"""Detect flat tantrices and perturb the curve until its tantrix hull is thick.

A tantrix is flat when the convex hull of its samples has no interior ball
about the base point. The repair adds smooth out-of-hull bumps on a compact
interior window, pulls the window toward its chord just enough to restore the
original length, and reparametrizes by arclength. Values and derivatives at
the endpoints are untouched.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import ConvexHull

from prescurv.core import quadrature
from prescurv.core.config import DEFAULT_TOLERANCES, Tolerances
from prescurv.core.curves import ParamCurve, SphericalCurve, average, tantrix
from prescurv.core.errors import PerturbationFailed

logger = logging.getLogger(__name__)

# Hulls are computed on at most this many points
MAX_HULL_POINTS = 4000

BUMP_POWER = 6

# First amplitude tried, as a fraction of the largest the budget allows
AMPLITUDE_FILL = 0.9

# Pull strengths scanned for the first sign change of the length excess
PULL_GRID = np.linspace(0.0, 1.0, 65)[1:]


@dataclass
class HullReport:
    """Inradius of the sample hull about a point, with a witness simplex."""
    thickness: float
    witness_simplex: list[int] = field(default_factory=list)
    diameter: float = 0.0

    @property
    def relative(self) -> float:
        return self.thickness / self.diameter if self.diameter > 0 else 0.0

    def is_flat(self, flat_tol: float) -> bool:
        return self.relative <= flat_tol


def _witness(points: np.ndarray, candidates: np.ndarray, center: np.ndarray) -> list[int]:
    """Greedy full-dimensional simplex among hull vertices."""
    dim = points.shape[1]
    chosen = [int(candidates[np.argmax(np.linalg.norm(points[candidates] - center, axis=1))])]
    while len(chosen) < dim + 1:
        base = points[chosen[0]]
        span = points[chosen[1:]] - base if len(chosen) > 1 else np.zeros((0, dim))
        offsets = points[candidates] - base
        if len(span):
            q, _ = np.linalg.qr(span.T)
            offsets = offsets - (offsets @ q) @ q.T
        chosen.append(int(candidates[np.argmax(np.linalg.norm(offsets, axis=1))]))
    return chosen


def point_cloud_thickness(points: np.ndarray, center: np.ndarray) -> HullReport:
    """Radius of the largest ball about `center` inside conv(points); 0 if none."""
    points = np.asarray(points, dtype=float)
    center = np.asarray(center, dtype=float)
    index = np.arange(len(points))
    if len(points) > MAX_HULL_POINTS:
        index = np.unique(np.linspace(0, len(points) - 1, MAX_HULL_POINTS).astype(int))
    sub = points[index]
    dim = sub.shape[1]
    diameter = float(np.max(np.linalg.norm(sub - sub.mean(axis=0), axis=1))) * 2.0
    if len(sub) <= dim or diameter == 0.0:
        return HullReport(0.0, [], diameter)

    singular = np.linalg.svd(sub - sub.mean(axis=0), compute_uv=False)
    if singular[dim - 1] <= 1e-12 * singular[0] * np.sqrt(len(sub)):
        return HullReport(0.0, [], diameter)

    try:
        hull = ConvexHull(sub)
    except (RuntimeError, ValueError):
        # qhull rejects numerically flat input
        return HullReport(0.0, [], diameter)
    normals, offsets = hull.equations[:, :-1], hull.equations[:, -1]
    distances = -(normals @ center + offsets)
    thickness = float(np.min(distances))
    if thickness <= 0:
        return HullReport(0.0, [], diameter)
    simplex = _witness(sub, hull.vertices, center)
    return HullReport(thickness, [int(index[i]) for i in simplex], diameter)


def hull_thickness(T: SphericalCurve, x0=None) -> HullReport:
    """Certified inradius about x0 (default: ave(T)) of the hull of T's samples."""
    if x0 is None:
        x0 = average(T)
    return point_cloud_thickness(T.samples, x0)


def _bump(t: np.ndarray, center: float, half_width: float, order: int = 0) -> np.ndarray:
    """(1 - s^2)^p on |s| < 1 with s = (t - center)/half_width, and its derivatives."""
    s = (np.asarray(t, dtype=float) - center) / half_width
    inside = np.abs(s) < 1
    u = np.where(inside, 1 - s * s, 0.0)
    p = BUMP_POWER
    if order == 0:
        out = u ** p
    elif order == 1:
        out = -2 * p * s * u ** (p - 1) / half_width
    else:
        out = (4 * p * (p - 1) * s * s * u ** (p - 2) - 2 * p * u ** (p - 1)) / half_width ** 2
    return np.where(inside, out, 0.0)


def _thin_directions(T: SphericalCurve, seed: int) -> np.ndarray:
    """Directions in which the tantrix hull is thinnest, signed deterministically."""
    centered = T.samples - T.samples.mean(axis=0)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    dim = T.ambient_dim
    scale = singular[0] if singular[0] > 0 else 1.0
    thin = [i for i in range(dim) if i >= len(singular) or singular[i] <= 1e-6 * scale]
    if not thin:
        thin = [dim - 1]
    reference = np.random.default_rng(seed).standard_normal(dim)
    directions = []
    for i in thin:
        d = vt[i]
        directions.append(d if d @ reference >= 0 else -d)
    return np.array(directions)


def _arclength_resample(g_values, domain, count: int, degree: int) -> ParamCurve:
    g = ParamCurve(domain, g_values, degree)
    edges = g.edges
    running = quadrature.cumulative(g.speed, edges)
    scale = running[-1] / domain.length
    targets = (np.linspace(domain.a, domain.b, len(edges)) - domain.a) * scale
    t = quadrature.invert_cumulative(g.speed, edges, running, targets)
    return g.with_samples(g.evaluate(t[:count]))


def pull_bracket(excess, start: float) -> tuple[float, float] | None:
    """First grid interval [lo, hi] on which excess changes sign, or None.

    The length excess is not monotone in the pull strength: a strong pull
    bends the window past its chord and adds length back.
    """
    lo, value = 0.0, start
    for c in PULL_GRID:
        current = excess(float(c))
        if np.sign(current) != np.sign(value):
            return lo, float(c)
        lo, value = float(c), current
    return None


def c2_distance(f: ParamCurve, g: ParamCurve) -> float:
    t = f.dense_params(2)
    return float(sum(np.max(np.linalg.norm(f.evaluate(t, nu) - g.evaluate(t, nu), axis=-1))
                     for nu in (0, 1, 2)))


def ensure_nonflat(f: ParamCurve, budget: float,
                   tolerances: Tolerances = DEFAULT_TOLERANCES,
                   record: dict | None = None) -> ParamCurve:
    """Return a unit-speed curve with nonflat tantrix, C^2-within `budget` of f.

    Inputs that are already nonflat come back unchanged. When `record` is
    given it receives the amplitude used and the C^2 distance consumed.
    Amplitudes run down a geometric ladder from the largest one the budget
    allows; the first admissible one is taken.
    """
    record = {} if record is None else record
    T = tantrix(f)
    report = hull_thickness(T)
    if not report.is_flat(tolerances.flat_tol):
        record.update(perturbed=False, thickness=report.thickness, consumed=0.0)
        return f
    if budget <= 0:
        raise PerturbationFailed("Tantrix is flat and the perturbation budget is empty")

    a, b = f.domain.a, f.domain.b
    length = f.domain.length
    window = (a + 0.25 * length, a + 0.75 * length)
    directions = _thin_directions(T, tolerances.seed)
    pieces = len(directions)
    width = (window[1] - window[0]) / pieces
    centers = window[0] + width * (np.arange(pieces) + 0.5)
    half = 0.5 * width
    t = f.params

    lift = sum(_bump(t, c, half)[:, None] * d for c, d in zip(centers, directions))
    dense = f.dense_params(2)
    bump_c2 = sum(float(np.max(np.abs(_bump(dense, centers[0], half, nu)))) for nu in (0, 1, 2))
    pull_weight = _bump(t, 0.5 * (window[0] + window[1]), 0.5 * (window[1] - window[0]))[:, None]
    left, right = f.evaluate(window[0]), f.evaluate(window[1])
    ratio = np.clip((t - window[0]) / (window[1] - window[0]), 0.0, 1.0)[:, None]
    pull = pull_weight * (left + ratio * (right - left) - f.samples)

    base_length = float(quadrature.integrate(f.speed, f.edges))

    def length_of(values) -> float:
        g = ParamCurve(f.domain, values, f.smoothness_order)
        return float(quadrature.integrate(g.speed, g.edges))

    amplitude = AMPLITUDE_FILL * budget / bump_c2
    for attempt in range(tolerances.max_attempts):
        lifted = f.samples + amplitude * lift
        excess = lambda c: length_of(lifted + c * pull) - base_length
        start = excess(0.0)
        if abs(start) <= 1e-14 * base_length:
            c = 0.0
        else:
            bracket = pull_bracket(excess, start)
            if bracket is None:
                # the chord pull cannot absorb this much extra length
                amplitude *= 0.5
                continue
            c = brentq(excess, *bracket, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        g = _arclength_resample(lifted + c * pull, f.domain, f.count, f.smoothness_order)
        consumed = c2_distance(f, g)
        thickness = hull_thickness(tantrix(g))
        logger.info("[nonflat] attempt %d: amplitude %.3e, c2 %.3e, thickness %.3e",
                    attempt, amplitude, consumed, thickness.thickness)
        if consumed > budget:
            amplitude *= 0.5
            continue
        if thickness.is_flat(tolerances.flat_tol):
            break
        record.update(perturbed=True, amplitude=amplitude, pull=c,
                      thickness=thickness.thickness, consumed=consumed)
        return g
    raise PerturbationFailed(
        f"No admissible perturbation within budget {budget:g} after {tolerances.max_attempts} attempts")
