"""Raise the speed of a reparametrized tantrix by inserting small spherical loops.

Each piece of T_bar gets a composite loop at its arclength midpoint q: a
number of laps around a small circle through q tangent to T_bar, followed by
one nested lap that uses up the rest of the length budget. Loops are blended
into the neighbouring arcs with a smoothstep weight and the whole path is
then parametrized by the running integral of the target speed.
"""

import logging
from dataclasses import dataclass, field
from math import ceil, floor

import numpy as np
from scipy.interpolate import make_interp_spline

from prescurv.core import quadrature
from prescurv.core.config import DEFAULT_TOLERANCES, LOOP_MODES, Tolerances
from prescurv.core.curves import SphericalCurve
from prescurv.core.density import smoothstep, smoothstep_derivative
from prescurv.core.errors import CannotSegment, CapTooSmall, SpeedMarginViolated

logger = logging.getLogger(__name__)

# Samples used for the chord-versus-arc injectivity test of a piece
INJECTIVITY_SAMPLES = 65

# Loops shorter than this are not worth a lap
MIN_LOOP_LENGTH = 1e-10

MAX_OUTPUT_SAMPLES = 400_000


def _project(m: np.ndarray, dm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Point m/|m| on the sphere and the derivative of that normalization."""
    norm = np.linalg.norm(m, axis=-1, keepdims=True)
    p = m / norm
    return p, (dm - np.sum(p * dm, axis=-1, keepdims=True) * p) / norm


class ArclengthTable:
    """T_bar tabulated against its own arclength sigma, with a spline in sigma."""

    def __init__(self, Tbar: SphericalCurve, factor: int = 4):
        edges = Tbar.edges
        running = quadrature.cumulative(Tbar.speed, edges)
        self.total = float(running[-1])
        sigma = np.linspace(0.0, self.total, factor * (len(edges) - 1) + 1)
        params = quadrature.invert_cumulative(Tbar.speed, edges, running, sigma)
        params[0], params[-1] = edges[0], edges[-1]
        self.sigma = sigma
        self.params = params
        self.spacing = float(sigma[1] - sigma[0])
        self._spline = make_interp_spline(sigma, Tbar.evaluate(params), k=5)

    def sigma_at(self, t) -> np.ndarray:
        return np.interp(t, self.params, self.sigma)

    def param_at(self, sigma) -> np.ndarray:
        return np.interp(sigma, self.sigma, self.params)

    def evaluate(self, sigma) -> tuple[np.ndarray, np.ndarray]:
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        return _project(self._spline(sigma), self._spline(sigma, 1))


def _normal_completion(q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """A fixed unit vector orthogonal to q and u."""
    if len(q) == 3:
        w = np.cross(q, u)
        return w / np.linalg.norm(w)
    frame = np.stack([q, u])
    basis = np.eye(len(q))
    residual = basis - (basis @ frame.T) @ frame
    best = int(np.argmax(np.linalg.norm(residual, axis=1)))
    return residual[best] / np.linalg.norm(residual[best])


def cap_radius_for(R: float, mode: str) -> float:
    """Cap about q that loops must stay inside, for ball radius R."""
    if mode not in LOOP_MODES:
        raise ValueError(f"Unknown loop mode {mode!r}")
    if mode == "single":
        return min(0.99 * R / 4.0, np.pi / 4)
    # first-order shifts of paired laps cancel, leaving a second-order one
    return min(np.sqrt(R / 2.0), np.pi / 4)


def piece_length_limit(R: float, mode: str) -> float:
    if mode == "single":
        return R / 2.0
    return 2.0 * cap_radius_for(R, mode)


def _is_injective(table: ArclengthTable, sigma0: float, sigma1: float) -> bool:
    s = np.linspace(sigma0, sigma1, INJECTIVITY_SAMPLES)
    p, _ = table.evaluate(s)
    chord = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
    arc = np.abs(s[:, None] - s[None, :])
    return bool(np.all(chord >= 0.5 * arc - 1e-15))


def segment_for_loops(Tbar: SphericalCurve, R: float, mode: str = "single",
                      table: ArclengthTable | None = None) -> list[tuple[float, float]]:
    """Split the domain into pieces of T_bar-length below the loop limit.

    Pieces have equal arclength; a piece whose samples fail the chord test is
    split again.
    """
    table = table or ArclengthTable(Tbar)
    limit = piece_length_limit(R, mode)
    count = max(1, ceil(table.total / (limit * (1 - 1e-9))))
    if count > 8 * Tbar.count:
        raise CannotSegment(
            f"{count} pieces needed for R = {R:.3e}; the grid of {Tbar.count} samples cannot resolve them")
    bounds = list(np.linspace(0.0, table.total, count + 1))

    pieces = []
    stack = [(bounds[i], bounds[i + 1]) for i in range(count)][::-1]
    while stack:
        s0, s1 = stack.pop()
        if _is_injective(table, s0, s1):
            pieces.append((s0, s1))
            continue
        if s1 - s0 < table.spacing:
            raise CannotSegment(f"Piece [{s0:.3e}, {s1:.3e}] is not injective at grid resolution")
        mid = 0.5 * (s0 + s1)
        stack.extend([(mid, s1), (s0, mid)])

    params = table.param_at(np.array([pieces[0][0]] + [s1 for _, s1 in pieces]))
    params[0], params[-1] = Tbar.domain.a, Tbar.domain.b
    logger.debug("[loops] %d pieces, limit %.3e", len(pieces), limit)
    return [(float(params[i]), float(params[i + 1])) for i in range(len(pieces))]


def _piece_edges(Tbar: SphericalCurve, piece: tuple[float, float]) -> np.ndarray:
    t0, t1 = piece
    step = Tbar.domain.length / max(Tbar.count - 1, 1)
    cells = max(8, 2 * ceil((t1 - t0) / step))
    return np.linspace(t0, t1, cells + 1)


def loop_budget(vtilde, Tbar: SphericalCurve, piece: tuple[float, float]) -> float:
    """Length the loops of a piece must absorb: int vtilde - length(T_bar)."""
    edges = _piece_edges(Tbar, piece)
    nodes, weights = quadrature.cell_nodes(edges)
    flat = nodes.ravel()
    target = np.asarray(vtilde(flat), dtype=float)
    current = Tbar.speed(flat)
    if np.any(target <= current):
        gap = float(np.min(target - current))
        raise SpeedMarginViolated(f"Target speed falls below |T_bar'| by {-gap:.3e} on {piece}")
    return float(np.sum((target - current).reshape(nodes.shape) * weights))


@dataclass(frozen=True, eq=False)
class LoopFamily:
    """Circles through q tangent to u, inside the cap of radius cap_radius."""
    q: np.ndarray
    u: np.ndarray
    w: np.ndarray
    cap_radius: float
    max_length: float
    blend_window: float
    mode: str = "single"

    def radius_for(self, length: float) -> float:
        if length > self.max_length * (1 + 1e-12):
            raise ValueError(f"Loop length {length:.3e} exceeds {self.max_length:.3e}")
        return float(np.arcsin(min(length, self.max_length) / (2 * np.pi)))

    def loop(self, radius: float, side: int, s) -> tuple[np.ndarray, np.ndarray]:
        """Point and unit velocity at arclength s along the loop of given radius."""
        s = np.atleast_1d(np.asarray(s, dtype=float))[:, None]
        sr, cr = np.sin(radius), np.cos(radius)
        center = cr * self.q + side * sr * self.w
        e = sr * self.q - side * cr * self.w
        angle = s / sr
        point = cr * center + sr * (np.cos(angle) * e + np.sin(angle) * self.u)
        velocity = -np.sin(angle) * e + np.cos(angle) * self.u
        return point, velocity


def build_loop_family(Tbar: SphericalCurve, piece: tuple[float, float], R: float,
                      mode: str = "single", blend_fraction: float = DEFAULT_TOLERANCES.blend_fraction,
                      table: ArclengthTable | None = None) -> LoopFamily:
    table = table or ArclengthTable(Tbar)
    s0, s1 = table.sigma_at(np.asarray(piece))
    q, velocity = table.evaluate(0.5 * (s0 + s1))
    q, u = q[0], velocity[0]
    u = u - (u @ q) * q
    u = u / np.linalg.norm(u)
    cap = cap_radius_for(R, mode)
    max_length = 2 * np.pi * np.sin(cap / 2)
    if cap <= 0 or max_length < MIN_LOOP_LENGTH:
        raise CapTooSmall(f"Cap radius {cap:.3e} cannot host a loop")
    return LoopFamily(q, u, _normal_completion(q, u), float(cap), float(max_length),
                      blend_fraction * float(max_length), mode)


@dataclass(frozen=True)
class Lap:
    radius: float
    side: int
    length: float


@dataclass(frozen=True, eq=False)
class CompositeLoop:
    """Laps around the outer circle then the nested remainder, as one path."""
    family: LoopFamily
    laps: tuple[Lap, ...]
    outer_laps: int
    remainder: float

    @property
    def length(self) -> float:
        return float(sum(lap.length for lap in self.laps))

    def evaluate(self, s) -> tuple[np.ndarray, np.ndarray]:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        starts = np.concatenate([[0.0], np.cumsum([lap.length for lap in self.laps])[:-1]])
        index = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(self.laps) - 1)
        points = np.empty((len(s), len(self.family.q)))
        velocities = np.empty_like(points)
        for i, lap in enumerate(self.laps):
            mask = index == i
            if np.any(mask):
                points[mask], velocities[mask] = self.family.loop(lap.radius, lap.side, s[mask] - starts[i])
        return points, velocities


def composite_loop(family: LoopFamily, L: float) -> CompositeLoop:
    """m = floor(L / length(C)) outer laps and one nested lap of the rest.

    Balanced families pair every lap with one on the opposite side, so laps
    come in twos and the remainder is split over a nested pair.
    """
    outer = family.max_length
    r_outer = family.radius_for(outer)
    laps: list[Lap] = []
    if family.mode == "balanced":
        pairs = floor(L / (2 * outer) * (1 + 1e-12))
        for _ in range(pairs):
            laps += [Lap(r_outer, 1, outer), Lap(r_outer, -1, outer)]
        m = 2 * pairs
        remainder = max(L - m * outer, 0.0)
        if remainder > MIN_LOOP_LENGTH:
            r = family.radius_for(remainder / 2)
            laps += [Lap(r, 1, remainder / 2), Lap(r, -1, remainder / 2)]
    else:
        m = floor(L / outer * (1 + 1e-12))
        laps += [Lap(r_outer, 1, outer)] * m
        remainder = max(L - m * outer, 0.0)
        if remainder > MIN_LOOP_LENGTH:
            laps.append(Lap(family.radius_for(remainder), 1, remainder))
    if remainder <= MIN_LOOP_LENGTH:
        remainder = 0.0
    return CompositeLoop(family, tuple(laps), m, remainder)


@dataclass(frozen=True)
class PlanEntry:
    piece: tuple[float, float]
    midpoint: float
    sigma: tuple[float, float, float]     # start, midpoint, end in T_bar arclength
    family: LoopFamily
    budget: float
    outer_laps: int
    remainder: float


@dataclass(frozen=True, eq=False)
class LoopPlan:
    entries: tuple[PlanEntry, ...]
    R: float
    mode: str
    table: ArclengthTable


def plan_loops(Tbar: SphericalCurve, vtilde, R: float,
               tolerances: Tolerances = DEFAULT_TOLERANCES) -> LoopPlan:
    """Pieces, budgets and loop families for every piece of T_bar."""
    table = ArclengthTable(Tbar)
    mode = tolerances.loop_mode
    entries = []
    for piece in segment_for_loops(Tbar, R, mode, table):
        budget = loop_budget(vtilde, Tbar, piece)
        family = build_loop_family(Tbar, piece, R, mode, tolerances.blend_fraction, table)
        s0, s1 = (float(v) for v in table.sigma_at(np.asarray(piece)))
        sm = 0.5 * (s0 + s1)
        loop = composite_loop(family, budget)
        entries.append(PlanEntry(piece, float(table.param_at(sm)), (s0, sm, s1), family,
                                 budget, loop.outer_laps, loop.remainder))
    total_laps = sum(e.outer_laps for e in entries)
    logger.info("[loops] R=%.3e mode=%s: %d pieces, %d outer laps", R, mode, len(entries), total_laps)
    return LoopPlan(tuple(entries), R, mode, table)


def empty_plan(Tbar: SphericalCurve, tolerances: Tolerances = DEFAULT_TOLERANCES) -> LoopPlan:
    """One piece with no loops: T_bar retraced at the speed given to insert_loops."""
    table = ArclengthTable(Tbar)
    piece = (Tbar.domain.a, Tbar.domain.b)
    family = build_loop_family(Tbar, piece, 1.0, "single", tolerances.blend_fraction, table)
    sigma = (0.0, 0.5 * table.total, table.total)
    entry = PlanEntry(piece, float(table.param_at(sigma[1])), sigma, family, 0.0, 0, 0.0)
    return LoopPlan((entry,), 1.0, "single", table)


@dataclass(frozen=True, eq=False)
class _Arc:
    table: ArclengthTable
    start: float
    length: float
    is_loop = False

    def evaluate(self, s):
        return self.table.evaluate(self.start + np.asarray(s, dtype=float))


@dataclass(frozen=True, eq=False)
class _LapPath:
    family: LoopFamily
    lap: Lap
    is_loop = True

    @property
    def length(self) -> float:
        return self.lap.length

    def evaluate(self, s):
        return self.family.loop(self.lap.radius, self.lap.side, s)


@dataclass(eq=False)
class PiecePath:
    """Arc into q, the laps, arc out of q; each junction blended over a window."""
    components: list
    windows: np.ndarray
    offsets: np.ndarray = field(init=False)
    edges: np.ndarray = field(init=False)
    running: np.ndarray = field(init=False)

    def __post_init__(self):
        lengths = np.array([c.length for c in self.components])
        self.offsets = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])

    def evaluate(self, tau) -> tuple[np.ndarray, np.ndarray]:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        index = np.clip(np.searchsorted(self.offsets, tau, side="right") - 1, 0, len(self.components) - 1)
        dim = len(self.components[0].evaluate(0.0)[0][0])
        points = np.empty((len(tau), dim))
        velocities = np.empty_like(points)
        for j, comp in enumerate(self.components):
            mask = index == j
            if not np.any(mask):
                continue
            s = tau[mask] - self.offsets[j]
            p, v = comp.evaluate(s)
            window = self.windows[j]
            inside = s < window
            if window > 0 and np.any(inside):
                prev = self.components[j - 1]
                pa, va = prev.evaluate(s[inside] + prev.length)
                x = s[inside] / window
                beta = smoothstep(x)[:, None]
                dbeta = (smoothstep_derivative(x) / window)[:, None]
                m = (1 - beta) * pa + beta * p[inside]
                dm = (1 - beta) * va + beta * v[inside] + dbeta * (p[inside] - pa)
                p[inside], v[inside] = _project(m, dm)
            points[mask], velocities[mask] = p, v
        return points, velocities

    def speed(self, tau) -> np.ndarray:
        return np.linalg.norm(self.evaluate(tau)[1], axis=-1)

    def tabulate(self, arc_spacing: float, samples_per_lap: int) -> None:
        parts = []
        for j, comp in enumerate(self.components):
            cells = samples_per_lap if comp.is_loop else max(8, ceil(comp.length / arc_spacing))
            parts.append(self.offsets[j] + np.linspace(0.0, comp.length, cells + 1))
            if self.windows[j] > 0:
                parts.append(self.offsets[j] + np.linspace(0.0, self.windows[j], 17))
        self.edges = np.unique(np.concatenate(parts))
        self.running = quadrature.cumulative(self.speed, self.edges)

    @property
    def length(self) -> float:
        return float(self.running[-1])


def _assemble(entry: PlanEntry, table: ArclengthTable, loop_length: float,
              tolerances: Tolerances) -> PiecePath:
    s0, sm, s1 = entry.sigma
    arc_in, arc_out = _Arc(table, s0, sm - s0), _Arc(table, sm, s1 - sm)
    laps = composite_loop(entry.family, loop_length).laps if loop_length > MIN_LOOP_LENGTH else ()
    components = [arc_in] + [_LapPath(entry.family, lap) for lap in laps] + [arc_out]
    windows = np.zeros(len(components))
    for j in range(1, len(components)):
        if not (components[j].is_loop or components[j - 1].is_loop):
            continue
        span = min(components[j].length, components[j - 1].length)
        if j == 1:
            span = min(span, arc_out.length)
        windows[j] = tolerances.blend_fraction * span
    path = PiecePath(components, windows)
    path.tabulate(table.spacing, tolerances.samples_per_lap)
    return path


def _calibrated_path(entry: PlanEntry, table: ArclengthTable, target: float,
                     tolerances: Tolerances) -> PiecePath:
    """Path whose measured length equals `target`; blends shift it slightly."""
    arcs = entry.sigma[2] - entry.sigma[0]
    nominal = target - arcs
    path = _assemble(entry, table, nominal, tolerances)
    for _ in range(8):
        gap = path.length - target
        if abs(gap) <= 1e-13 * max(target, 1.0) or nominal <= MIN_LOOP_LENGTH:
            break
        nominal -= gap
        path = _assemble(entry, table, nominal, tolerances)
    return path


def _speed_error(path: PiecePath, tau: np.ndarray, mass: np.ndarray) -> float:
    """Relative gap between path length and vtilde mass over each sample cell.

    Lengths are re-integrated on the path table refined by the sample points.
    """
    if len(tau) < 2:
        return 0.0
    edges = np.unique(np.concatenate([path.edges, tau]))
    running = quadrature.cumulative(path.speed, edges)
    traced = np.diff(running[np.searchsorted(edges, tau)])
    wanted = np.diff(mass)
    return float(np.max(np.abs(traced - wanted) / wanted))


def insert_loops(Tbar: SphericalCurve, vtilde, plan: LoopPlan,
                 tolerances: Tolerances = DEFAULT_TOLERANCES,
                 record: dict | None = None) -> SphericalCurve:
    """T_tilde of speed vtilde tracing T_bar plus the planned loops.

    When `record` is given it receives, per piece, the geodesic distance of
    the piece's image from q and the measured path length.
    """
    record = {} if record is None else record
    table = plan.table
    domain = Tbar.domain
    bounds = np.array([plan.entries[0].piece[0]] + [e.piece[1] for e in plan.entries])

    top = float(np.max(vtilde(Tbar.dense_params(2))))
    shortest = min((e.family.max_length for e in plan.entries if e.budget > 0),
                   default=table.total)
    ds = shortest / tolerances.samples_per_lap
    count = max(Tbar.count, ceil(domain.length * top / ds) + 1)
    if count > MAX_OUTPUT_SAMPLES:
        logger.warning("[loops] capping output at %d samples (%d wanted)", MAX_OUTPUT_SAMPLES, count)
        count = MAX_OUTPUT_SAMPLES
    grid = domain.grid(count)

    edges = np.unique(np.concatenate([grid, bounds]))
    mass = quadrature.cumulative(vtilde, edges)
    at_bound = mass[np.searchsorted(edges, bounds)]
    at_grid = mass[np.searchsorted(edges, grid)]
    piece_of = np.clip(np.searchsorted(bounds, grid, side="right") - 1, 0, len(plan.entries) - 1)

    samples = np.empty((count, Tbar.ambient_dim))
    record["pieces"] = []
    for i, entry in enumerate(plan.entries):
        target = float(at_bound[i + 1] - at_bound[i])
        path = _calibrated_path(entry, table, target, tolerances)
        mask = piece_of == i
        local = at_grid[mask] - at_bound[i]
        tau = quadrature.invert_cumulative(path.speed, path.edges, path.running, local)
        samples[mask] = path.evaluate(tau)[0]
        distance = np.arccos(np.clip(samples[mask] @ entry.family.q, -1.0, 1.0))
        record["pieces"].append({
            "piece": entry.piece,
            "length": path.length,
            "target": target,
            "max_distance": float(distance.max()) if len(distance) else 0.0,
            "speed_error": _speed_error(path, tau, local),
        })
    logger.debug("[loops] %d output samples over %d pieces", count, len(plan.entries))
    return SphericalCurve(domain, samples, Tbar.smoothness_order, Tbar.sphere_tol)
