"""Find the ball point whose looped tantrix has the prescribed average.

The average map F(x) = ave(T_tilde_x) moves every x by less than the ball
radius, so G(x) = x0 + x - F(x) maps the ball into itself and has a fixed
point. A damped fixed-point iteration looks for it first; a simplex descent
confined to the ball takes over when the iteration stalls. Side conditions
that fail along the way shrink the ball and restart.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from prescurv.core.config import DEFAULT_TOLERANCES, Tolerances
from prescurv.core.curves import SphericalCurve, average
from prescurv.core.density import DensityFamily, reparam_family
from prescurv.core.errors import NoConvergence, RTooLarge, RUnderflow, ShrinkSignal, TantrixEscape
from prescurv.core.loops import insert_loops, plan_loops

logger = logging.getLogger(__name__)

# Smallest damping factor tried before the iteration counts as stalled
MIN_OMEGA = 1.0 / 64


@dataclass(frozen=True)
class BallSpec:
    x0: np.ndarray
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"Ball radius must be positive, got {self.R}")

    def contains(self, x, slack: float = 1e-12) -> bool:
        return float(np.linalg.norm(np.asarray(x) - self.x0)) <= self.R * (1 + slack)

    def clamp(self, x) -> np.ndarray:
        """x itself, or its radial projection just inside the ball."""
        offset = np.asarray(x, dtype=float) - self.x0
        norm = float(np.linalg.norm(offset))
        limit = self.R * (1 - 1e-9)
        return self.x0 + offset if norm <= limit else self.x0 + offset * (limit / norm)


@dataclass
class SolveReport:
    x_star: np.ndarray
    residual: float
    iterations: int
    R_history: list[float] = field(default_factory=list)
    condition_flags: list[str] = field(default_factory=list)
    evaluations: int = 0
    method: str = "fixed_point"

    def to_dict(self) -> dict:
        return {
            "x_star": [float(v) for v in self.x_star],
            "residual": self.residual,
            "iterations": self.iterations,
            "R_history": list(self.R_history),
            "condition_flags": list(self.condition_flags),
            "evaluations": self.evaluations,
            "method": self.method,
        }


def shrink_R(ball: BallSpec, reason: str, floor: float = 0.0) -> BallSpec:
    """Halve the radius; RUnderflow once it would drop below `floor`."""
    R = 0.5 * ball.R
    if R < floor:
        raise RUnderflow(f"R = {R:.3e} fell below {floor:.3e} ({reason})")
    logger.info("[solve] shrinking R %.3e -> %.3e (%s)", ball.R, R, reason)
    return BallSpec(ball.x0, R)


class AverageMap:
    """x -> ave(T_tilde_x) for one segment, remembering the last curve built.

    With `image_limit` set, a looped tantrix that strays further than that
    from the image of T is rejected with TantrixEscape.
    """

    def __init__(self, T: SphericalCurve, family: DensityFamily, vtilde,
                 tolerances: Tolerances = DEFAULT_TOLERANCES, image_limit: float | None = None):
        self.T = T
        self.family = family
        self.vtilde = vtilde
        self.tolerances = tolerances
        self.image_limit = image_limit
        self.last: dict | None = None
        self._image_tree: cKDTree | None = None

    def image_deviation(self, curve: SphericalCurve) -> float:
        """Largest distance from a sample of `curve` to the image of T."""
        if self._image_tree is None:
            self._image_tree = cKDTree(self.T.evaluate(self.T.dense_params(4)))
        distances, _ = self._image_tree.query(curve.samples)
        return float(np.max(distances))

    def build(self, x, R: float) -> tuple[SphericalCurve, dict]:
        x = np.asarray(x, dtype=float)
        Tbar, phi = reparam_family(self.T, self.family.with_radius(R), x)
        plan = plan_loops(Tbar, self.vtilde, R, self.tolerances)
        record: dict = {}
        Ttilde = insert_loops(Tbar, self.vtilde, plan, self.tolerances, record)
        record.update(Tbar=Tbar, phi=phi, plan=plan)
        return Ttilde, record

    def __call__(self, x, R: float) -> np.ndarray:
        Ttilde, record = self.build(x, R)
        value = average(Ttilde)
        drift = float(np.linalg.norm(value - x))
        if drift >= R:
            raise RTooLarge(f"|F(x) - x| = {drift:.3e} is not below R = {R:.3e}")
        if self.image_limit is not None:
            escape = self.image_deviation(Ttilde)
            if escape >= self.image_limit:
                raise TantrixEscape(f"Tantrix strays {escape:.3e} from T, limit {self.image_limit:.3e}")
            record["image_deviation"] = escape
        self.last = {"x": np.array(x, dtype=float), "R": R, "curve": Ttilde, "value": value, **record}
        return value

    def curve_at(self, x, R: float) -> SphericalCurve:
        if self.last is not None and self.last["R"] == R and np.array_equal(self.last["x"], x):
            return self.last["curve"]
        self(x, R)
        return self.last["curve"]


def _fixed_point(F, ball: BallSpec, target: np.ndarray, tol: float, max_iter: int,
                 omega0: float, report: SolveReport) -> tuple[np.ndarray, float]:
    x = ball.x0.copy()
    value = F(x, ball.R)
    report.evaluations += 1
    residual = float(np.linalg.norm(value - target))
    while residual > tol and report.iterations < max_iter:
        omega = omega0
        while True:
            trial = ball.clamp(x + omega * (target - value))
            trial_value = F(trial, ball.R)
            report.evaluations += 1
            trial_residual = float(np.linalg.norm(trial_value - target))
            if trial_residual < residual:
                break
            omega *= 0.5
            if omega < MIN_OMEGA:
                logger.debug("[solve] fixed point stalled at residual %.3e", residual)
                return x, residual
        x, value, residual = trial, trial_value, trial_residual
        report.iterations += 1
        logger.debug("[solve] iter %d: omega %.3g, residual %.3e", report.iterations, omega, residual)
    return x, residual


def _simplex_descent(F, ball: BallSpec, target: np.ndarray, start: np.ndarray, tol: float,
                     max_iter: int, report: SolveReport) -> tuple[np.ndarray, float]:
    penalty = 1e6 * ball.R ** 2

    def objective(y):
        if not ball.contains(y):
            return penalty + float(np.linalg.norm(y - ball.x0)) ** 2
        report.evaluations += 1
        return float(np.sum((F(y, ball.R) - target) ** 2))

    result = minimize(objective, start, method="Nelder-Mead",
                      options={"xatol": 1e-3 * tol, "fatol": tol * tol,
                               "maxfev": 20 * max_iter})
    report.iterations += int(result.nit)
    if not ball.contains(result.x):
        return start, np.inf
    return np.asarray(result.x, dtype=float), float(np.sqrt(max(result.fun, 0.0)))


def solve_average_constraint(ball: BallSpec, target, F, tol: float = DEFAULT_TOLERANCES.solver_tol,
                             max_iter: int = DEFAULT_TOLERANCES.max_iter,
                             tolerances: Tolerances = DEFAULT_TOLERANCES) -> SolveReport:
    """Find x in the ball with F(x, R) = target.

    F takes the point and the current radius. A ShrinkSignal raised by F halves
    the radius and restarts from the center; RUnderflow ends the search once
    the radius drops below r_min times its starting value.
    """
    target = np.asarray(target, dtype=float)
    floor = tolerances.r_min * ball.R
    report = SolveReport(ball.x0.copy(), np.inf, 0, [ball.R])
    while True:
        try:
            x, residual = _fixed_point(F, ball, target, tol, max_iter, tolerances.omega0, report)
            if residual > tol:
                report.condition_flags.append("fixed_point_stalled")
                report.method = "simplex"
                y, fallback = _simplex_descent(F, ball, target, x, tol, max_iter, report)
                if fallback < residual:
                    x, residual = y, fallback
            break
        except ShrinkSignal as signal:
            report.condition_flags.append(signal.reason)
            ball = shrink_R(ball, signal.reason, floor)
            report.R_history.append(ball.R)

    report.x_star, report.residual = x, residual
    if residual > tol:
        raise NoConvergence(f"Residual {residual:.3e} above tolerance {tol:.1e}", report)
    logger.info("[solve] residual %.3e after %d iterations, R=%.3e",
                residual, report.iterations, ball.R)
    return report
