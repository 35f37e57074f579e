"""Numerical defaults and runtime knobs."""

import os
from dataclasses import dataclass, replace

# Spline degree for curve reconstruction (C^4 reconstructions at degree 5)
SPLINE_DEGREE = 5

# Gauss-Legendre points per grid cell
QUAD_ORDER = 4

LOOP_MODES = ("single", "balanced")


@dataclass(frozen=True)
class Tolerances:
    """Every tolerance and iteration cap used by the pipeline."""
    speed_tol: float = 1e-6       # relative unit-speed deviation
    sphere_tol: float = 1e-10     # | |T| - 1 | on spherical samples
    quad_tol: float = 1e-9
    quad_order: int = QUAD_ORDER
    diffeo_tol: float = 1e-12     # parameter tolerance of diffeo inverses
    flat_tol: float = 1e-4        # hull thickness below this counts as flat
    solver_tol: float = 1e-8
    max_iter: int = 200
    omega0: float = 1.0
    r_min: float = 1e-5           # relative to the initial ball radius
    junction_tol: float = 1e-6
    spline_degree: int = SPLINE_DEGREE
    k: int | None = None          # None -> max(n + 5, 8)
    loop_mode: str = "single"
    samples_per_lap: int = 48
    blend_fraction: float = 0.1   # blend window as a fraction of a loop
    max_attempts: int = 12
    seed: int = 0

    def replace(self, **changes) -> "Tolerances":
        return replace(self, **changes)

    def partition_size(self, ambient_dim: int) -> int:
        return self.k if self.k is not None else max(ambient_dim + 5, 8)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


DEFAULT_TOLERANCES = Tolerances()


def worker_count() -> int:
    """Worker pool size, capped by PRESCURV_THREADS when set."""
    default = min(4, os.cpu_count() or 1)
    raw = os.environ.get("PRESCURV_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default
