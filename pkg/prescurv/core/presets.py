"""Built-in input curves: circle, helix, torus knots and seeded Fourier knots."""

import logging

import numpy as np

from prescurv.core.curves import Domain, ParamCurve
from prescurv.core.errors import BadPreset, PrescurvError

logger = logging.getLogger(__name__)

DEFAULT_COUNT = 1024

# Fourier knots halve their random amplitude at most this many times
MAX_FOURIER_TRIES = 8


def circle(r: float = 1.0, count: int = DEFAULT_COUNT) -> ParamCurve:
    """Round circle of radius r in the xy-plane, unit speed when r = 1."""
    if r <= 0:
        raise BadPreset(f"circle radius must be positive, got {r}")
    domain = Domain("circle", 0.0, 2 * np.pi)
    t = domain.grid(count)
    return ParamCurve(domain, r * np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1))


def helix(a: float = 1.0, b: float = 0.5, turns: float = 1.0, count: int = DEFAULT_COUNT) -> ParamCurve:
    """Arclength-parametrized helix with radius a and pitch b / (2 pi); curvature a / (a^2 + b^2)."""
    if a <= 0 or turns <= 0:
        raise BadPreset("helix needs a > 0 and turns > 0")
    c = float(np.hypot(a, b))
    domain = Domain("interval", 0.0, 2 * np.pi * turns * c)
    s = domain.grid(count)
    u = s / c
    return ParamCurve(domain, np.stack([a * np.cos(u), a * np.sin(u), b * u], axis=1))


def torus_knot(p: int = 2, q: int = 3, major: float = 2.0, minor: float = 1.0,
               count: int = DEFAULT_COUNT) -> ParamCurve:
    """(p, q) torus knot; (2, 3) is the trefoil."""
    if np.gcd(int(p), int(q)) != 1 or p < 1 or q < 1:
        raise BadPreset(f"torus_knot needs coprime positive p, q, got ({p}, {q})")
    if not 0 < minor < major:
        raise BadPreset("torus_knot needs 0 < minor < major")
    domain = Domain("circle", 0.0, 2 * np.pi)
    t = domain.grid(count)
    radial = major + minor * np.cos(q * t)
    return ParamCurve(domain, np.stack([radial * np.cos(p * t), radial * np.sin(p * t),
                                        minor * np.sin(q * t)], axis=1))


def _trefoil(t: np.ndarray) -> np.ndarray:
    return np.stack([np.sin(t) + 2 * np.sin(2 * t), np.cos(t) - 2 * np.cos(2 * t), -np.sin(3 * t)], axis=1)


def fourier_knot(seed: int = 0, modes: int = 3, amplitude: float = 0.15,
                 count: int = DEFAULT_COUNT) -> ParamCurve:
    """Trefoil plus seeded low Fourier modes, shrunk until the result is embedded."""
    from prescurv.core.verify import is_embedded

    if modes < 1:
        raise BadPreset(f"fourier_knot needs modes >= 1, got {modes}")
    domain = Domain("circle", 0.0, 2 * np.pi)
    t = domain.grid(count)
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((modes, 2, 3))
    harmonics = np.arange(1, modes + 1)[:, None]
    extra = (np.einsum("mt,md->td", np.cos(harmonics * t), coeffs[:, 0])
             + np.einsum("mt,md->td", np.sin(harmonics * t), coeffs[:, 1])) / modes
    base = _trefoil(t)
    for _ in range(MAX_FOURIER_TRIES):
        curve = ParamCurve(domain, base + amplitude * extra)
        try:
            curve.require_regular()
            if is_embedded(curve):
                return curve
        except PrescurvError:
            pass
        amplitude *= 0.5
        logger.debug("[generate] fourier_knot seed %d: amplitude down to %.3e", seed, amplitude)
    raise BadPreset(f"fourier_knot seed {seed}: no embedded perturbation after {MAX_FOURIER_TRIES} halvings")


PRESETS = {
    "circle": circle,
    "helix": helix,
    "torus_knot": torus_knot,
    "fourier_knot": fourier_knot,
}


def make_preset(name: str, **params) -> ParamCurve:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise BadPreset(f"Unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise BadPreset(f"Bad parameters for {name}: {exc}") from exc
