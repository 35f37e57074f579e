"""Steer the average of a tantrix by reparametrizing it with a density family.

A partition of unity theta_i over k equal pieces of I gives node points
p_i = ave(theta_i T). Positive barycentric coefficients c_i(x) of a point x
near x0 = mean(p_i) weight the pieces, and the inverse of the resulting mass
function reparametrizes T so that its average lands on x.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from math import comb

import numpy as np
from scipy.linalg import lu_factor, lu_solve, qr

from prescurv.core import quadrature
from prescurv.core.config import DEFAULT_TOLERANCES, Tolerances
from prescurv.core.curves import Diffeo, Domain, SphericalCurve, mass_reparam
from prescurv.core.errors import (
    BadK, DegenerateCurve, InfeasibleMargin, NegativeCoefficient, OutsideBall, RTooLarge,
)
from prescurv.core.nonflat import point_cloud_thickness

logger = logging.getLogger(__name__)

# Order of the smoothstep used in the bump transitions (C^4 joins)
SMOOTHSTEP_ORDER = 4

# Half-width of each transition, in units of one piece
TRANSITION = 0.25

RADIUS_SAFETY = 0.9


def smoothstep(x: np.ndarray, order: int = SMOOTHSTEP_ORDER) -> np.ndarray:
    """Polynomial smoothstep with `order` vanishing derivatives at 0 and 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    total = np.zeros_like(x)
    for n in range(order + 1):
        total += comb(order + n, n) * comb(2 * order + 1, order - n) * (-x) ** n
    return x ** (order + 1) * total


@dataclass(frozen=True)
class PartitionOfUnity:
    """Bumps theta_0..theta_{k-1} over k equal pieces of a domain, summing to 1."""
    domain: Domain
    k: int
    order: int = SMOOTHSTEP_ORDER

    def thetas(self, t) -> np.ndarray:
        """Matrix of theta_i(t), shape (len(t), k)."""
        s = (np.asarray(t, dtype=float) - self.domain.a) / self.domain.length * self.k
        s = np.atleast_1d(s)
        width = 2 * TRANSITION
        i = np.arange(self.k)[None, :]
        up = smoothstep((s[:, None] - i + TRANSITION) / width, self.order)
        down = 1.0 - smoothstep((s[:, None] - (i + 1) + TRANSITION) / width, self.order)
        up[:, 0] = 1.0
        down[:, -1] = 1.0
        return up * down

    def theta(self, i: int, t) -> np.ndarray:
        return self.thetas(t)[:, i]

    def support(self, i: int) -> tuple[float, float]:
        h = self.domain.length / self.k
        lo = self.domain.a + max(0.0, (i - TRANSITION)) * h
        hi = self.domain.a + min(self.k, (i + 1 + TRANSITION)) * h
        return lo, hi

    @cached_property
    def integrals(self) -> np.ndarray:
        """int theta_i over the normalized domain [0, 1]."""
        edges = np.linspace(self.domain.a, self.domain.b, 64 * self.k + 1)
        return quadrature.integrate(self.thetas, edges, 8) / self.domain.length


def build_pou(domain: Domain, k: int, ambient_dim: int = 3) -> PartitionOfUnity:
    if k <= ambient_dim:
        raise BadK(f"Need k > n = {ambient_dim}, got k = {k}")
    return PartitionOfUnity(domain.as_interval(), k)


def node_points(T: SphericalCurve, pou: PartitionOfUnity) -> np.ndarray:
    """p_i = ave(theta_i T) = k int theta_i T over the normalized interval."""
    k, n = pou.k, T.ambient_dim

    def weighted(t):
        return (pou.thetas(t)[:, :, None] * T.evaluate(t)[:, None, :]).reshape(len(t), k * n)

    total = quadrature.integrate(weighted, T.edges)
    return k * total.reshape(k, n) / T.domain.length


@dataclass(frozen=True, eq=False)
class DensityFamily:
    """Barycentric machinery on a ball B(x0, R) inside conv(p_i)."""
    nodes: np.ndarray
    x0: np.ndarray
    R: float
    pou: PartitionOfUnity | None
    basis: tuple[int, ...]
    weights: np.ndarray                  # c(x) = 1/k + weights @ (x - x0)
    radius_bounds: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.nodes)

    def with_radius(self, R: float) -> "DensityFamily":
        return replace(self, R=float(R))

    @classmethod
    def from_nodes(cls, nodes: np.ndarray, pou: PartitionOfUnity | None = None,
                   R: float | None = None, speed_ratio: float | None = None) -> "DensityFamily":
        """Select an independent subset, factor it, and initialize R."""
        nodes = np.asarray(nodes, dtype=float)
        k, n = nodes.shape
        if k <= n:
            raise BadK(f"Need k > n = {n}, got k = {k}")
        x0 = nodes.mean(axis=0)
        centered = (nodes - x0).T
        _, r_factor, pivots = qr(centered, pivoting=True, mode="economic")
        if abs(r_factor[n - 1, n - 1]) <= 1e-14 * max(abs(r_factor[0, 0]), 1e-300):
            raise DegenerateCurve("Node points do not span R^n; the tantrix is flat")
        basis = tuple(sorted(int(p) for p in pivots[:n]))
        factor = lu_factor(centered[:, basis])
        inverse = lu_solve(factor, np.eye(n))
        scatter = np.zeros((k, n))
        scatter[list(basis), np.arange(n)] = 1.0
        weights = (scatter - 1.0 / k) @ inverse

        bounds = {"positivity": (1.0 / k) / float(np.max(np.linalg.norm(weights, axis=1)))}
        bounds["hull"] = point_cloud_thickness(nodes, x0).thickness
        if pou is not None:
            m = pou.integrals
            s0 = float(m.sum()) / k
            slope = float(np.linalg.norm(weights.T @ m))
            room = min(k * s0 - 2.0 / 3.0, 2.0 - k * s0)
            bounds["lambda"] = room / (k * slope) if slope > 0 else np.inf
        if speed_ratio is not None:
            bounds["speed"] = max(0.0, 1.0 - speed_ratio) * bounds["positivity"]
        if R is None:
            if bounds.get("speed", 1.0) <= 0:
                raise InfeasibleMargin(f"Tantrix speed reaches the target (ratio {speed_ratio:.6g})")
            if bounds["hull"] <= 0:
                raise DegenerateCurve("Node average is not interior to the node hull")
            R = RADIUS_SAFETY * min(bounds.values())
        family = cls(nodes, x0, float(R), pou, basis, weights, bounds)
        logger.info("[density] k=%d basis=%s R=%.3e bounds=%s", k, basis, family.R,
                    {key: f"{value:.3e}" for key, value in bounds.items()})
        return family


def build_density_family(T: SphericalCurve, k: int | None = None, vtilde=None,
                         tolerances: Tolerances = DEFAULT_TOLERANCES) -> DensityFamily:
    """Node points of T and the initial ball; vtilde adds the speed-margin bound."""
    k = k or tolerances.partition_size(T.ambient_dim)
    pou = build_pou(T.domain, k, T.ambient_dim)
    nodes = node_points(T, pou)
    ratio = None
    if vtilde is not None:
        t = T.dense_params(2)
        ratio = float(np.max(T.speed(t) / vtilde(t)))
    return DensityFamily.from_nodes(nodes, pou, speed_ratio=ratio)


def barycentric_coeffs(family: DensityFamily, x) -> np.ndarray:
    """Positive c_i(x) with sum c_i = 1 and sum c_i p_i = x."""
    offset = np.asarray(x, dtype=float) - family.x0
    if np.linalg.norm(offset) > family.R * (1 + 1e-9):
        raise OutsideBall(f"|x - x0| = {np.linalg.norm(offset):.3e} exceeds R = {family.R:.3e}")
    coeffs = 1.0 / family.k + family.weights @ offset
    if np.any(coeffs <= 0):
        raise NegativeCoefficient(f"min c_i = {coeffs.min():.3e}; R must shrink")
    return coeffs


@dataclass(frozen=True, eq=False)
class Density:
    """rho_bar_x = lambda(x) sum_i c_i(x) theta_i, as a function on the curve domain."""
    pou: PartitionOfUnity
    coeffs: np.ndarray
    lam: float

    def __call__(self, t) -> np.ndarray:
        return self.lam * (self.pou.thetas(t) @ self.coeffs)


def density(family: DensityFamily, x) -> Density:
    coeffs = barycentric_coeffs(family, x)
    lam = 1.0 / float(coeffs @ family.pou.integrals)
    return Density(family.pou, coeffs, lam)


def reparam_family(T: SphericalCurve, family: DensityFamily, x) -> tuple[SphericalCurve, Diffeo]:
    """T_bar_x = T o phi_x with ave(T_bar_x) = (lambda(x)/k) x."""
    try:
        rho_bar = density(family, x)
    except NegativeCoefficient as exc:
        raise RTooLarge(str(exc)) from exc
    if abs(rho_bar.lam / family.k - 1.0) >= 0.5:
        raise RTooLarge(f"lambda(x)/k = {rho_bar.lam / family.k:.3f} is outside (1/2, 3/2)")

    rho = lambda t: rho_bar(t) / T.speed(t)
    psi = mass_reparam(T, rho)
    a = T.domain.a
    values = psi.evaluate(T.params - a)
    values[0], values[-1] = T.domain.a, T.domain.b
    phi = Diffeo(T.domain, values, T.smoothness_order, target=T.domain)
    Tbar = T.with_samples(T.evaluate(values))
    return Tbar, phi


def smoothstep_derivative(x: np.ndarray, order: int = SMOOTHSTEP_ORDER) -> np.ndarray:
    """d/dx of smoothstep; zero outside (0, 1)."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xc = np.clip(x, 0.0, 1.0)
    # S'(x) = C * x^N (1 - x)^N with C = (2N + 1)! / (N!)^2
    scale = comb(2 * order, order) * (2 * order + 1)
    return np.where(inside, scale * xc ** order * (1 - xc) ** order, 0.0)
