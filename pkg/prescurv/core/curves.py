"""Sampled curves on an interval or a circle and the calculus the pipeline runs on.

Curves are stored as values on a uniform parameter grid and reconstructed
with an interpolating spline (not-a-knot on intervals, periodic on circles).
Every integral is a composite Gauss-Legendre rule on the sample grid.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import make_interp_spline

from prescurv.core import quadrature
from prescurv.core.config import DEFAULT_TOLERANCES, SPLINE_DEGREE, QUAD_ORDER
from prescurv.core.errors import DegenerateCurve, DomainMismatch, NonpositiveDensity

logger = logging.getLogger(__name__)

DOMAIN_KINDS = ("interval", "circle")

# Dense evaluation grids never exceed this many points
MAX_DENSE_POINTS = 400_000


@dataclass(frozen=True)
class Domain:
    """[a, b] or the circle R/((b - a)Z)."""
    kind: str = "interval"
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"Unknown domain kind: {self.kind!r}")
        if not self.b > self.a:
            raise ValueError(f"Domain needs b > a, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def periodic(self) -> bool:
        return self.kind == "circle"

    def grid(self, count: int) -> np.ndarray:
        """Uniform sample parameters; circles omit b (it is identified with a)."""
        if self.periodic:
            return self.a + self.length * np.arange(count) / count
        return np.linspace(self.a, self.b, count)

    def edges(self, count: int) -> np.ndarray:
        """Cell boundaries for quadrature over the whole domain."""
        if self.periodic:
            return np.linspace(self.a, self.b, count + 1)
        return np.linspace(self.a, self.b, count)

    def wrap(self, t):
        t = np.asarray(t, dtype=float)
        if self.periodic:
            return self.a + np.mod(t - self.a, self.length)
        return t

    def as_interval(self) -> "Domain":
        return Domain("interval", self.a, self.b)

    def matches(self, other: "Domain", tol: float = 1e-12) -> bool:
        return (self.kind == other.kind
                and abs(self.a - other.a) <= tol * max(1.0, abs(self.a))
                and abs(self.b - other.b) <= tol * max(1.0, abs(self.b)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, data: dict) -> "Domain":
        return cls(kind=data["kind"], a=float(data["a"]), b=float(data["b"]))


@dataclass(frozen=True, eq=False)
class Sampled:
    """Values on a uniform grid of a Domain with spline reconstruction."""
    domain: Domain
    samples: np.ndarray
    smoothness_order: int = SPLINE_DEGREE

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if len(samples) < 4:
            raise DegenerateCurve(f"Need at least 4 samples, got {len(samples)}")
        if not np.all(np.isfinite(samples)):
            raise DegenerateCurve("Samples contain non-finite values")

    @property
    def count(self) -> int:
        return len(self.samples)

    @cached_property
    def params(self) -> np.ndarray:
        return self.domain.grid(self.count)

    @cached_property
    def edges(self) -> np.ndarray:
        return self.domain.edges(self.count)

    @cached_property
    def spline(self):
        degree = min(self.smoothness_order, self.count - 1)
        if self.domain.periodic:
            t = np.append(self.params, self.domain.b)
            y = np.concatenate([self.samples, self.samples[:1]], axis=0)
            return make_interp_spline(t, y, k=degree, bc_type="periodic")
        return make_interp_spline(self.params, self.samples, k=degree)

    def evaluate(self, t, nu: int = 0) -> np.ndarray:
        return self.spline(self.domain.wrap(t), nu)

    def __call__(self, t) -> np.ndarray:
        return self.evaluate(t)

    def derivative(self, t, order: int = 1) -> np.ndarray:
        return self.evaluate(t, order)

    def dense_params(self, factor: int = 4) -> np.ndarray:
        factor = max(1, min(factor, MAX_DENSE_POINTS // max(self.count, 1)))
        if self.domain.periodic:
            return self.domain.grid(self.count * factor)
        return self.domain.grid((self.count - 1) * factor + 1)


@dataclass(frozen=True, eq=False)
class ScalarFunction(Sampled):
    """A real function on a Domain (curvature profiles, densities, speeds)."""

    @classmethod
    def from_callable(cls, domain: Domain, fn: Callable, count: int) -> "ScalarFunction":
        return cls(domain, np.asarray(fn(domain.grid(count)), dtype=float))


@dataclass(frozen=True, eq=False)
class ParamCurve(Sampled):
    """A curve in R^n, n >= 3, sampled at uniform parameters."""

    def __post_init__(self):
        super().__post_init__()
        if self.samples.ndim != 2:
            raise DegenerateCurve("Curve samples must be a (count, n) array")
        if self.samples.shape[1] < 3:
            raise DegenerateCurve(f"Ambient dimension must be >= 3, got {self.samples.shape[1]}")

    @property
    def ambient_dim(self) -> int:
        return self.samples.shape[1]

    def speed(self, t) -> np.ndarray:
        return np.linalg.norm(self.derivative(t), axis=-1)

    def with_samples(self, samples: np.ndarray) -> "ParamCurve":
        return ParamCurve(self.domain, samples, self.smoothness_order)

    def restrict(self, t0: float, t1: float, count: int) -> "ParamCurve":
        """The piece over [t0, t1] as an interval curve with `count` samples."""
        sub = Domain("interval", t0, t1)
        return ParamCurve(sub, self.evaluate(sub.grid(count)), self.smoothness_order)

    def require_regular(self, rel_threshold: float = 1e-8) -> float:
        """Minimum reconstructed speed; raises DegenerateCurve when it vanishes."""
        speeds = self.speed(self.dense_params(2))
        top = float(np.max(speeds))
        low = float(np.min(speeds))
        if top == 0.0 or low <= rel_threshold * top:
            raise DegenerateCurve(f"Derivative vanishes (min speed {low:.3e})")
        return low


@dataclass(frozen=True, eq=False)
class SphericalCurve(ParamCurve):
    """A curve on the unit sphere; samples are renormalized on construction."""
    sphere_tol: float = DEFAULT_TOLERANCES.sphere_tol

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        norms = np.linalg.norm(samples, axis=-1, keepdims=True)
        if np.any(norms == 0):
            raise DegenerateCurve("Spherical curve has a zero sample")
        object.__setattr__(self, "samples", samples / norms)
        super().__post_init__()

    def with_samples(self, samples: np.ndarray) -> "SphericalCurve":
        return SphericalCurve(self.domain, samples, self.smoothness_order, self.sphere_tol)

    def sphere_deviation(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.samples, axis=-1) - 1.0)))


@dataclass(frozen=True, eq=False)
class Diffeo(ScalarFunction):
    """Monotone map from `domain` onto `target`, sampled on an interval grid.

    Circle maps are stored as their lift on [a, b] with phi(a) = a.
    """
    target: Domain = field(default_factory=Domain)

    def __post_init__(self):
        super().__post_init__()
        if np.any(np.diff(self.samples) <= 0):
            raise DegenerateCurve("Diffeo samples are not strictly increasing")

    @cached_property
    def params(self) -> np.ndarray:
        return np.linspace(self.domain.a, self.domain.b, self.count)

    @cached_property
    def edges(self) -> np.ndarray:
        return self.params

    @cached_property
    def spline(self):
        return make_interp_spline(self.params, self.samples, k=min(self.smoothness_order, self.count - 1))

    def evaluate(self, t, nu: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.domain.periodic:
            turns = np.floor((t - self.domain.a) / self.domain.length)
            base = self.spline(t - turns * self.domain.length, nu)
            return base + turns * self.target.length if nu == 0 else base
        return self.spline(t, nu)

    def dense_params(self, factor: int = 4) -> np.ndarray:
        factor = max(1, min(factor, MAX_DENSE_POINTS // self.count))
        return np.linspace(self.domain.a, self.domain.b, (self.count - 1) * factor + 1)

    def inverse(self, tol: float = DEFAULT_TOLERANCES.diffeo_tol) -> "Diffeo":
        targets = np.linspace(self.target.a, self.target.b, self.count)
        slope = lambda t: self.spline(t, 1)
        running = self.samples - self.samples[0]
        values = quadrature.invert_cumulative(slope, self.params, running,
                                              targets - self.samples[0], tol=tol)
        return Diffeo(self.target, values, self.smoothness_order, target=self.domain)

    @classmethod
    def identity(cls, domain: Domain, count: int = 64) -> "Diffeo":
        return cls(domain, np.linspace(domain.a, domain.b, count), target=domain)


@dataclass(frozen=True, eq=False)
class CurvatureSpec:
    """Target curvature: a constant, an expression in t, or samples on a Domain."""
    kind: str
    domain: Domain
    value: float | None = None
    text: str | None = None
    profile: ScalarFunction | None = None
    fn: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "expression", "samples"):
            raise ValueError(f"Unknown curvature spec kind: {self.kind!r}")

    @classmethod
    def constant(cls, domain: Domain, value: float) -> "CurvatureSpec":
        if value <= 0:
            raise ValueError("Target curvature must be positive")
        return cls("constant", domain, value=float(value))

    @classmethod
    def expression(cls, domain: Domain, text: str, fn: Callable | None = None) -> "CurvatureSpec":
        if fn is None:
            from prescurv.core.expression import compile_expression
            fn = compile_expression(text)
        return cls("expression", domain, text=text, fn=fn)

    @classmethod
    def from_samples(cls, domain: Domain, values: np.ndarray) -> "CurvatureSpec":
        return cls("samples", domain, profile=ScalarFunction(domain, values))

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full(t.shape, self.value)
        if self.kind == "samples":
            return self.profile.evaluate(t)
        return np.broadcast_to(np.asarray(self.fn(self.domain.wrap(t)), dtype=float), t.shape)

    def __call__(self, t) -> np.ndarray:
        return self.evaluate(t)

    def transformed(self, domain: Domain, fn: Callable, text: str) -> "CurvatureSpec":
        """A derived target t -> fn(t, self) used by the reductions of the pipeline."""
        return CurvatureSpec("expression", domain, text=text, fn=lambda t: fn(t, self))

    def describe(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "expression":
            return {"kind": "expression", "text": self.text}
        return {"kind": "samples", "count": self.profile.count}


def c1_norm(f: Sampled, refine: int = 4) -> float:
    """sup|f| + sup|f'| over the domain, on a refined grid of the reconstruction."""
    t = f.dense_params(refine)
    values = f.evaluate(t)
    slopes = f.evaluate(t, 1)
    if values.ndim == 1:
        return float(np.max(np.abs(values)) + np.max(np.abs(slopes)))
    return float(np.max(np.linalg.norm(values, axis=-1)) + np.max(np.linalg.norm(slopes, axis=-1)))


def resample_unit_speed(f: ParamCurve,
                        tol: float = DEFAULT_TOLERANCES.diffeo_tol) -> tuple[ParamCurve, float, Diffeo]:
    """Find lambda and phi with lambda * f o phi of unit speed on the same domain."""
    f.require_regular()
    speed = f.speed
    edges = f.domain.edges(f.count)
    running = quadrature.cumulative(speed, edges, QUAD_ORDER)
    total = float(running[-1])
    lam = f.domain.length / total

    u = np.linspace(f.domain.a, f.domain.b, len(edges))
    phi_values = quadrature.invert_cumulative(speed, edges, running, (u - f.domain.a) / lam, tol=tol)
    phi_values[0], phi_values[-1] = f.domain.a, f.domain.b
    phi = Diffeo(f.domain, phi_values, f.smoothness_order, target=f.domain)

    grid = f.params
    g = f.with_samples(lam * f.evaluate(phi.evaluate(grid)))
    logger.debug("[resample] length %.6g, lambda %.6g", total, lam)
    return g, lam, phi


def tantrix(f: ParamCurve) -> SphericalCurve:
    """Unit tangent indicatrix T = f'/|f'| at the sample parameters."""
    f.require_regular()
    return SphericalCurve(f.domain, f.derivative(f.params), f.smoothness_order)


def curvature_at(f: ParamCurve, t) -> np.ndarray:
    """kappa = |T'|/|f'| evaluated at arbitrary parameters, in any dimension."""
    d1 = f.derivative(t, 1)
    d2 = f.derivative(t, 2)
    n1 = np.sum(d1 * d1, axis=-1)
    if np.any(n1 == 0):
        raise DegenerateCurve("Curvature undefined where the derivative vanishes")
    cross = n1 * np.sum(d2 * d2, axis=-1) - np.sum(d1 * d2, axis=-1) ** 2
    return np.sqrt(np.clip(cross, 0.0, None)) / n1 ** 1.5


def curvature(f: ParamCurve) -> ScalarFunction:
    f.require_regular()
    return ScalarFunction(f.domain, curvature_at(f, f.params), f.smoothness_order)


def average(f: Sampled) -> np.ndarray:
    """(1/|I|) times the integral of f over its domain."""
    return quadrature.integrate(f.evaluate, f.edges) / f.domain.length


def _density_values(rho: Callable, nodes: np.ndarray) -> np.ndarray:
    values = np.asarray(rho(nodes), dtype=float)
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise NonpositiveDensity("Density must be positive and finite on the domain")
    return values


def mass_and_cm(f: ParamCurve, rho: Callable) -> tuple[float, np.ndarray]:
    """mass = int rho|f'| and cm = (1/mass) int f rho|f'|."""
    _density_values(rho, quadrature.cell_nodes(f.edges)[0].ravel())
    weight = lambda t: rho(t) * f.speed(t)
    mass = float(quadrature.integrate(weight, f.edges))
    moment = quadrature.integrate(lambda t: f.evaluate(t) * weight(t)[:, None], f.edges)
    return mass, moment / mass


def center_of_mass(f: ParamCurve) -> np.ndarray:
    """Length-weighted center of mass; invariant under reparametrization."""
    return mass_and_cm(f, lambda t: np.ones_like(t))[1]


def mass_reparam(f: ParamCurve, rho: Callable,
                 tol: float = DEFAULT_TOLERANCES.diffeo_tol) -> Diffeo:
    """Inverse of t -> int_a^t rho|f'|, as a map [0, mass] -> [a, b]."""
    _density_values(rho, quadrature.cell_nodes(f.edges)[0].ravel())
    weight = lambda t: rho(t) * f.speed(t)
    edges = f.edges
    running = quadrature.cumulative(weight, edges)
    mass = float(running[-1])
    source = Domain("interval", 0.0, mass)
    s = np.linspace(0.0, mass, len(edges))
    values = quadrature.invert_cumulative(weight, edges, running, s, tol=tol)
    values[0], values[-1] = f.domain.a, f.domain.b
    return Diffeo(source, values, f.smoothness_order, target=f.domain.as_interval())


def reparametrize(f: ParamCurve, phi: Diffeo, count: int | None = None) -> ParamCurve:
    """f o phi sampled on phi's source domain."""
    count = count or phi.count
    domain = phi.domain if not f.domain.periodic else f.domain
    t = domain.grid(count)
    return ParamCurve(domain, f.evaluate(phi.evaluate(t)), f.smoothness_order)


def integrate_tantrix(T: ParamCurve, base) -> ParamCurve:
    """f(t) = base + int_a^t T du on T's sample grid, as an interval curve."""
    edges = T.edges
    running = quadrature.cumulative(T.evaluate, edges)
    samples = np.asarray(base, dtype=float)[None, :] + running
    return ParamCurve(T.domain.as_interval(), samples, T.smoothness_order)


def c1_distance(f: ParamCurve, g: ParamCurve, refine: int = 2) -> float:
    """c1_norm(f - g), evaluated on a common refined grid."""
    if not f.domain.matches(g.domain):
        raise DomainMismatch(f"Domains differ: {f.domain} vs {g.domain}")
    finer = f if f.count >= g.count else g
    t = finer.dense_params(refine)
    gap = np.linalg.norm(f.evaluate(t) - g.evaluate(t), axis=-1)
    slope_gap = np.linalg.norm(f.derivative(t) - g.derivative(t), axis=-1)
    return float(np.max(gap) + np.max(slope_gap))
