"""Composite Gauss-Legendre quadrature on sample grids and monotone inversion."""

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from prescurv.core.config import QUAD_ORDER


@lru_cache(maxsize=16)
def _reference_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    xi, wi = leggauss(order)
    return xi, wi


def cell_nodes(edges: np.ndarray, order: int = QUAD_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes and weights for every cell of a grid.

    Returns arrays of shape (cells, order).
    """
    edges = np.asarray(edges, dtype=float)
    xi, wi = _reference_rule(order)
    left = edges[:-1, None]
    half = 0.5 * np.diff(edges)[:, None]
    nodes = left + half * (xi[None, :] + 1.0)
    weights = half * wi[None, :]
    return nodes, weights


def _apply(func, nodes: np.ndarray) -> np.ndarray:
    values = np.asarray(func(nodes.ravel()), dtype=float)
    if values.ndim == 1:
        return values.reshape(nodes.shape)
    return values.reshape(nodes.shape + values.shape[1:])


def cell_integrals(func, edges: np.ndarray, order: int = QUAD_ORDER) -> np.ndarray:
    """Integral of func over each grid cell; func maps (m,) -> (m,) or (m, n)."""
    nodes, weights = cell_nodes(edges, order)
    values = _apply(func, nodes)
    if values.ndim == 2:
        return np.sum(values * weights, axis=1)
    return np.einsum("cq,cqn->cn", weights, values)


def integrate(func, edges: np.ndarray, order: int = QUAD_ORDER) -> np.ndarray | float:
    return cell_integrals(func, edges, order).sum(axis=0)


def cumulative(func, edges: np.ndarray, order: int = QUAD_ORDER) -> np.ndarray:
    """Running integral from edges[0] to every edge (first entry is zero)."""
    per_cell = cell_integrals(func, edges, order)
    out = np.zeros((len(edges),) + per_cell.shape[1:])
    out[1:] = np.cumsum(per_cell, axis=0)
    return out


def partial_integrals(func, starts: np.ndarray, stops: np.ndarray,
                      order: int = QUAD_ORDER) -> np.ndarray:
    """Integral of a scalar func over each [starts[i], stops[i]] (one Gauss rule each)."""
    xi, wi = _reference_rule(order)
    starts = np.asarray(starts, dtype=float)
    half = 0.5 * (np.asarray(stops, dtype=float) - starts)
    nodes = starts[:, None] + half[:, None] * (xi[None, :] + 1.0)
    values = _apply(func, nodes)
    return np.sum(values * wi[None, :], axis=1) * half


def invert_cumulative(func, edges: np.ndarray, running: np.ndarray, targets: np.ndarray,
                      tol: float = 1e-12, order: int = QUAD_ORDER,
                      max_steps: int = 60) -> np.ndarray:
    """Solve C(t) = target for the monotone running integral C of a positive func.

    The bracketing cell comes from the tabulated running integral; inside the
    cell Newton steps are taken and replaced by bisection whenever they leave
    the bracket.
    """
    edges = np.asarray(edges, dtype=float)
    targets = np.clip(np.asarray(targets, dtype=float), running[0], running[-1])
    cell = np.clip(np.searchsorted(running, targets, side="right") - 1, 0, len(edges) - 2)
    lo = edges[cell].copy()
    hi = edges[cell + 1].copy()
    base = running[cell]
    span = running[cell + 1] - base
    frac = np.divide(targets - base, span, out=np.zeros_like(targets), where=span > 0)
    t = lo + frac * (hi - lo)

    for _ in range(max_steps):
        residual = base + partial_integrals(func, edges[cell], t, order) - targets
        lo = np.where(residual < 0, t, lo)
        hi = np.where(residual > 0, t, hi)
        slope = np.asarray(func(t), dtype=float)
        newton = t - residual / np.where(slope > 0, slope, np.inf)
        bad = (newton <= lo) | (newton >= hi) | ~np.isfinite(newton)
        step = np.where(bad, 0.5 * (lo + hi), newton)
        done = np.abs(step - t) <= tol
        t = step
        if np.all(done):
            break
    return t
