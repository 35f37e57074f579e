"""Orchestration: segment the curve, solve each segment, stitch, and build knots.

Stages
------
1. segment_global    - cut the domain so each tantrix piece sits in a small ball
2. solve_local       - per segment: nonflat repair, density family, loops, solve
3. stitch            - resample the segment solutions on one global grid
4. prescribe_curvature / constant_curvature_knot - the public drivers
"""

import logging
import concurrent.futures
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from prescurv.core.config import DEFAULT_TOLERANCES, Tolerances, worker_count
from prescurv.core.curves import (
    CurvatureSpec, Domain, ParamCurve, SphericalCurve, c1_norm, curvature_at,
    integrate_tantrix, resample_unit_speed, tantrix,
)
from prescurv.core.density import build_density_family
from prescurv.core.errors import (
    CertificateFailed, InfeasibleMargin, JunctionMismatch, NotEmbedded, TantrixEscape,
)
from prescurv.core.nonflat import ensure_nonflat
from prescurv.core.solver import AverageMap, BallSpec, solve_average_constraint
from prescurv.core import verify

logger = logging.getLogger(__name__)

# Fraction of the epsilon/4 tantrix ball actually used when cutting segments
SEGMENT_FILL = 0.8

MIN_SEGMENT_SAMPLES = 64

MAX_STITCH_SAMPLES = 400_000

# Relative curvature jump at a junction that triggers a re-solve with wider blends
CURVATURE_JUMP_LIMIT = 1e-3

# Knot targets are raised to LAMBDA_MARGIN times the largest curvature ratio
LAMBDA_MARGIN = 1.25


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    f: ParamCurve
    kappa_tilde: CurvatureSpec
    epsilon: float
    pinned: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        pinned = tuple(sorted(float(p) for p in self.pinned))
        if len(set(pinned)) != len(pinned):
            raise ValueError("Pinned points must be distinct")
        domain = self.f.domain
        for p in pinned:
            if not domain.a <= p <= domain.b:
                raise ValueError(f"Pinned point {p} lies outside [{domain.a}, {domain.b}]")
        object.__setattr__(self, "pinned", pinned)


@dataclass(eq=False)
class SegmentSolution:
    segment: tuple[float, float]
    curve: ParamCurve
    tantrix: SphericalCurve
    report: object
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "segment": list(self.segment),
            "samples": self.curve.count,
            "solve": self.report.to_dict() if self.report is not None else None,
            **{k: v for k, v in self.diagnostics.items() if not k.startswith("_")},
        }


def _breakpoints(domain: Domain, pinned) -> list[float]:
    if domain.periodic:
        start = pinned[0] if pinned else domain.a
        inner = [p for p in pinned if p > start] + [p + domain.length for p in pinned if p < start]
        return [start] + sorted(inner) + [start + domain.length]
    return sorted({domain.a, domain.b, *pinned})


def segment_global(f: ParamCurve, epsilon: float, pinned=()) -> list[tuple[float, float]]:
    """Cut f's domain so every tantrix piece fits a ball of radius 0.8 * epsilon / 4.

    Pinned points are always segment ends, no segment is longer than 1, and
    closed curves get at least two segments.
    """
    radius = SEGMENT_FILL * epsilon / 4
    T = tantrix(f)
    step = f.domain.length / (4 * f.count)
    bounds = _breakpoints(f.domain, sorted(pinned))
    segments = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        t = np.linspace(lo, hi, max(2, ceil((hi - lo) / step) + 1))
        points = T.evaluate(t)
        start = 0
        for j in range(1, len(t)):
            center = 0.5 * (points[start] + points[j])
            spread = np.max(np.linalg.norm(points[start:j + 1] - center, axis=1))
            if (spread > radius or t[j] - t[start] > 1.0) and j - 1 > start:
                segments.append((float(t[start]), float(t[j - 1])))
                start = j - 1
        segments.append((float(t[start]), float(hi)))
    if f.domain.periodic and len(segments) < 2:
        lo, hi = segments[0]
        segments = [(lo, 0.5 * (lo + hi)), (0.5 * (lo + hi), hi)]
    logger.info("[segment] %d segments (tantrix radius %.3e)", len(segments), radius)
    return segments


def solve_local(f_i: ParamCurve, kappa_i, V_radius: float, margin: float | None = None,
                tolerances: Tolerances = DEFAULT_TOLERANCES) -> SegmentSolution:
    """Unit-speed curve on f_i's interval with curvature kappa_i and f_i's ends."""
    a, b = f_i.domain.a, f_i.domain.b
    budget = V_radius / 2 if margin is None else min(V_radius / 2, margin / 4)
    nonflat: dict = {}
    g = ensure_nonflat(f_i, budget, tolerances, nonflat)
    T = tantrix(g)

    vtilde = lambda t: np.asarray(kappa_i(t), dtype=float)
    t = T.dense_params(2)
    if np.any(vtilde(t) <= T.speed(t)):
        raise InfeasibleMargin(f"Target curvature does not exceed the curvature on [{a:.6g}, {b:.6g}]")

    family = build_density_family(T, tolerances.k, vtilde, tolerances)
    F = AverageMap(T, family, vtilde, tolerances, image_limit=V_radius)
    chord = (f_i.evaluate(b) - f_i.evaluate(a)) / f_i.domain.length
    report = solve_average_constraint(BallSpec(family.x0, family.R), chord, F,
                                      tolerances.solver_tol, tolerances.max_iter, tolerances)
    R = report.R_history[-1]
    Ttilde = F.curve_at(report.x_star, R)
    escape = F.image_deviation(Ttilde)
    if escape >= V_radius:
        raise TantrixEscape(f"Tantrix strays {escape:.3e} from T on [{a:.6g}, {b:.6g}], limit {V_radius:.3e}")
    curve = integrate_tantrix(Ttilde, f_i.evaluate(a))

    deviation = float(np.max(np.linalg.norm(Ttilde.samples - T.evaluate(Ttilde.params), axis=1)))
    diagnostics = {
        "nonflat": nonflat,
        "R_initial": family.R,
        "radius_bounds": family.radius_bounds,
        "loop_mode": tolerances.loop_mode,
        "image_deviation": escape,
        "tantrix_deviation": deviation,
        "c0_bound": deviation * f_i.domain.length,
        "end_gap": float(np.linalg.norm(curve.samples[-1] - f_i.evaluate(b))),
        "pieces": len(F.last["plan"].entries),
        "outer_laps": int(sum(e.outer_laps for e in F.last["plan"].entries)),
    }
    logger.info("[solve] [%.6g, %.6g]: residual %.2e, R %.2e, %d laps",
                a, b, report.residual, R, diagnostics["outer_laps"])
    return SegmentSolution((a, b), curve, Ttilde, report, diagnostics)


def _junction(left: ParamCurve, right: ParamCurve, t_left: float, t_right: float) -> dict:
    value = float(np.linalg.norm(left.evaluate(t_left) - right.evaluate(t_right)))
    slope = float(np.linalg.norm(left.derivative(t_left) - right.derivative(t_right)))
    k_left = float(curvature_at(left, np.array([t_left]))[0])
    k_right = float(curvature_at(right, np.array([t_right]))[0])
    return {"at": t_left, "value": value, "tangent": slope,
            "curvature": abs(k_left - k_right) / max(k_left, k_right)}


def stitch(solutions: list[SegmentSolution], f: ParamCurve,
           tolerances: Tolerances = DEFAULT_TOLERANCES, record: dict | None = None) -> ParamCurve:
    """Resample the segment curves on one grid of f's domain at the finest spacing."""
    record = {} if record is None else record
    domain = f.domain
    if len(solutions) == 1 and not domain.periodic:
        record["junctions"] = []
        return ParamCurve(domain, solutions[0].curve.samples, f.smoothness_order)

    junctions = []
    pairs = list(zip(solutions[:-1], solutions[1:]))
    if domain.periodic:
        pairs.append((solutions[-1], solutions[0]))
    for left, right in pairs:
        # the closing pair compares t0 + period with t0 of the first segment
        info = _junction(left.curve, right.curve, left.segment[1], right.segment[0])
        junctions.append(info)
        if info["value"] + info["tangent"] > tolerances.junction_tol:
            raise JunctionMismatch(
                f"C1 jump {info['value'] + info['tangent']:.3e} at t={info['at']:.6g}")
    record["junctions"] = junctions

    spacing = min(s.curve.domain.length / (s.curve.count - 1) for s in solutions)
    count = ceil(domain.length / spacing) + (0 if domain.periodic else 1)
    if count > MAX_STITCH_SAMPLES:
        logger.warning("[stitch] capping global grid at %d samples (%d wanted)", MAX_STITCH_SAMPLES, count)
        count = MAX_STITCH_SAMPLES
    grid = domain.grid(count)
    start = solutions[0].segment[0]
    lifted = np.where(grid < start, grid + domain.length, grid) if domain.periodic else grid
    ends = np.array([s.segment[1] for s in solutions])
    owner = np.clip(np.searchsorted(ends, lifted, side="left"), 0, len(solutions) - 1)
    samples = np.empty((count, f.ambient_dim))
    for i, solution in enumerate(solutions):
        mask = owner == i
        if np.any(mask):
            samples[mask] = solution.curve.evaluate(lifted[mask])
    logger.info("[stitch] %d segments onto %d samples, max C1 jump %.2e", len(solutions), count,
                max(j["value"] + j["tangent"] for j in junctions))
    return ParamCurve(domain, samples, f.smoothness_order)


def _solve_segments(g: ParamCurve, kappa, segments, V_radius: float, margin: float,
                    tolerances: Tolerances) -> list[SegmentSolution]:
    step = g.domain.length / max(g.count - 1, 1)

    def run(segment):
        t0, t1 = segment
        count = max(MIN_SEGMENT_SAMPLES, ceil((t1 - t0) / step) + 1)
        return solve_local(g.restrict(t0, t1, count), kappa, V_radius, margin, tolerances)

    with concurrent.futures.ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(run, segments))


def _unit_speed(f: ParamCurve, tolerances: Tolerances) -> bool:
    speeds = f.speed(f.dense_params(2))
    return bool(np.max(np.abs(speeds - 1.0)) <= tolerances.speed_tol)


def prescribe_curvature(spec: ProblemSpec,
                        tolerances: Tolerances = DEFAULT_TOLERANCES) -> tuple[ParamCurve, dict]:
    """Curve C^1-within epsilon of spec.f with curvature spec.kappa_tilde, tangent at pinned points.

    Non-unit-speed inputs are rescaled to unit speed g = lambda f o phi first;
    the target for g is kappa_tilde o phi / lambda and the result is mapped
    back as g_tilde o phi^-1 / lambda.
    """
    f, kappa_tilde = spec.f, spec.kappa_tilde
    report: dict = {"reduction": None}
    if _unit_speed(f, tolerances):
        g, kappa, epsilon, pinned = f, kappa_tilde, spec.epsilon, spec.pinned
        phi = None
    else:
        g, lam, phi = resample_unit_speed(f, tolerances.diffeo_tol)
        phi_inv = phi.inverse(tolerances.diffeo_tol)
        kappa = kappa_tilde.transformed(
            g.domain, lambda t, k: k.evaluate(phi.evaluate(t)) / lam, f"({kappa_tilde.describe()}) o phi / {lam:.12g}")
        epsilon = spec.epsilon * lam / (1 + c1_norm(phi_inv))
        pinned = tuple(float(phi_inv.evaluate(p)) for p in spec.pinned)
        report["reduction"] = {"lambda": lam, "epsilon": epsilon}
        logger.info("[segment] rescaled to unit speed: lambda %.6g, epsilon %.3e", lam, epsilon)

    t = g.dense_params(2)
    gap = kappa.evaluate(t) - curvature_at(g, t)
    margin = float(np.min(gap))
    if margin <= 0:
        worst = float(t[np.argmin(gap)])
        raise InfeasibleMargin(f"Target curvature does not exceed curvature at t={worst:.6g} (gap {margin:.3e})")

    if tolerances.loop_mode == "balanced":
        logger.warning("[loops] balanced loops: tantrix drift is bounded by the cap radius, not R/2")
    segments = segment_global(g, epsilon, pinned)
    V_radius = epsilon / 2
    solutions = _solve_segments(g, kappa, segments, V_radius, margin, tolerances)

    stitched: dict = {}
    g_tilde = stitch(solutions, g, tolerances, stitched)
    rough = [i for i, j in enumerate(stitched["junctions"]) if j["curvature"] > CURVATURE_JUMP_LIMIT]
    if rough:
        wider = tolerances.replace(blend_fraction=min(0.25, 2 * tolerances.blend_fraction))
        redo = sorted({i for i in rough} | {(i + 1) % len(solutions) for i in rough})
        logger.info("[stitch] curvature jumps at %d junctions; re-solving %d segments with wider blends",
                    len(rough), len(redo))
        fresh = _solve_segments(g, kappa, [segments[i] for i in redo], V_radius, margin, wider)
        for i, solution in zip(redo, fresh):
            solutions[i] = solution
        g_tilde = stitch(solutions, g, tolerances, stitched)

    if phi is None:
        f_tilde = g_tilde
    else:
        grid = f.domain.grid(g_tilde.count)
        f_tilde = ParamCurve(f.domain, g_tilde.evaluate(phi_inv.evaluate(grid)) / lam, f.smoothness_order)

    metrics = verify.curve_metrics(f_tilde, kappa_tilde, f, spec.pinned, unit_speed=phi is None)
    report.update(
        loops={"mode": tolerances.loop_mode, "drift_bound_relaxed": tolerances.loop_mode == "balanced"},
        segments=[s.to_dict() for s in solutions],
        junctions=stitched["junctions"],
        margin=margin,
        epsilon=spec.epsilon,
        metrics=metrics.to_dict(),
    )
    return f_tilde, report


def constant_curvature_knot(f: ParamCurve, kappa_tilde: CurvatureSpec,
                            tolerances: Tolerances = DEFAULT_TOLERANCES,
                            epsilon: float | None = None) -> tuple[ParamCurve, dict]:
    """Isotopic representative of the closed curve f with curvature kappa_tilde.

    The chain is: reparametrize f to unit speed g, prescribe lambda_c *
    kappa_tilde on g, then shrink the result by lambda_c. Only the middle
    link needs evidence; it is sampled along the linear homotopy.
    """
    if not verify.is_embedded(f):
        raise NotEmbedded("Input curve is not embedded")
    g, lam, _ = resample_unit_speed(f, tolerances.diffeo_tol)
    t = g.dense_params(2)
    ratio = curvature_at(g, t) / kappa_tilde.evaluate(t)
    chain = {"reparametrization": {"lambda": lam}}

    if np.max(np.abs(ratio - 1.0)) <= 1e-6:
        chain.update(homotopy={"ok": True, "steps": []}, scaling={"lambda_c": 1.0}, ok=True)
        logger.info("[verify] input already has the target curvature")
        return g, chain

    lam_c = LAMBDA_MARGIN * float(np.max(ratio))
    raised = kappa_tilde.transformed(g.domain, lambda s, k: lam_c * k.evaluate(s),
                                     f"{lam_c:.12g} * ({kappa_tilde.describe()})")
    if epsilon is None:
        epsilon = min(0.1, 0.25 * verify.min_self_distance(g))
    g_tilde, report = prescribe_curvature(ProblemSpec(g, raised, epsilon), tolerances)
    knot = ParamCurve(g_tilde.domain, g_tilde.samples * lam_c, g_tilde.smoothness_order)

    certificate = verify.homotopy_certificate(g, g_tilde)
    chain.update(homotopy=certificate, scaling={"lambda_c": lam_c}, solve=report,
                 embedded=verify.is_embedded(knot))
    chain["ok"] = bool(certificate["ok"] and chain["embedded"])
    if not chain["ok"]:
        raise CertificateFailed("Isotopy evidence failed for the constructed knot", knot, chain)
    return knot, chain
