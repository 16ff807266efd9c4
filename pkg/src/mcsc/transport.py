"""Transition matrices from distribution snapshots via optimal transport.

For independent-measures data only the state distribution at each time is
known. Consecutive snapshots are matched by exact optimal transport, the
plans are averaged over time, and the average plan is normalized into a
column-stochastic matrix.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

# numpy inputs only; keep POT from importing torch/jax/tensorflow backends
for _key in ("PYTORCH", "JAX", "CUPY", "TENSORFLOW"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_key}", "1")
import ot  # noqa: E402

from .chain import DistributionSeries, evolve

__all__ = [
    "DistributionSeries",
    "solve_ot",
    "plan_cost",
    "average_plan",
    "plan_to_transition",
    "regrid_series",
    "match_series",
    "free_run_mismatch",
]


def solve_ot(src, dst, D, atol: float = 1e-9) -> np.ndarray:
    """Exact optimal transport plan between two distributions.

    Returns ``F`` with ``F[i, j]`` the mass moved from state ``i`` to
    ``j``; rows sum to ``src``, columns to ``dst``, and ``sum(F * D)`` is
    minimal. Solved with the network simplex algorithm.
    """
    a = np.ascontiguousarray(src, dtype=float)
    b = np.ascontiguousarray(dst, dtype=float)
    M = np.ascontiguousarray(D, dtype=float)
    if a.ndim != 1 or a.shape != b.shape or M.shape != (a.size, a.size):
        raise ValueError("marginals and distance matrix shapes are inconsistent")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("marginals must be nonnegative")
    if abs(a.sum() - b.sum()) > atol:
        raise ValueError(f"infeasible marginals: masses {a.sum()} and {b.sum()} differ")
    F, log = ot.emd(a, b, M, numItermax=max(100_000, 50 * a.size**2), log=True)
    if log.get("warning"):
        raise RuntimeError(f"network simplex failed: {log['warning']}")
    return np.asarray(F)


def plan_cost(F, D) -> float:
    return float(np.sum(np.asarray(F) * np.asarray(D)))


def average_plan(plans) -> np.ndarray:
    plans = [np.asarray(F, dtype=float) for F in plans]
    if not plans:
        raise ValueError("need at least one transport plan")
    return np.mean(np.stack(plans), axis=0)


def plan_to_transition(F_bar) -> np.ndarray:
    """Normalize each row of a plan into the outgoing distribution of that state.

    States without outflow become self-loops.
    """
    F = np.asarray(F_bar, dtype=float)
    if np.any(F < 0):
        raise ValueError("transport plan must be nonnegative")
    out = F.sum(axis=1)
    A = np.zeros_like(F.T)
    live = out > 0
    A[:, live] = F[live].T / out[live]
    dead = np.flatnonzero(~live)
    A[dead, dead] = 1.0
    return A


def regrid_series(series: DistributionSeries, grid, smooth_window: int = 0) -> DistributionSeries:
    """Linear interpolation onto ``grid``, then a centered moving average.

    The averaging window spans ``2 * smooth_window + 1`` grid points and is
    truncated at both ends. Each point is renormalized onto the simplex.
    """
    grid = np.asarray(grid, dtype=float)
    t = series.times
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D array")
    if grid.min() < t[0] or grid.max() > t[-1]:
        raise ValueError(f"grid must lie within [{t[0]}, {t[-1]}]")
    Z = np.stack([np.interp(grid, t, series.points[:, k]) for k in range(series.n_states)], axis=1)
    if smooth_window > 0:
        csum = np.vstack([np.zeros(Z.shape[1]), np.cumsum(Z, axis=0)])
        n = grid.size
        lo = np.clip(np.arange(n) - smooth_window, 0, n)
        hi = np.clip(np.arange(n) + smooth_window + 1, 0, n)
        Z = (csum[hi] - csum[lo]) / (hi - lo)[:, None]
    Z = np.clip(Z, 0.0, None)
    Z /= Z.sum(axis=1, keepdims=True)
    return DistributionSeries(grid, Z)


def free_run_mismatch(A, series: DistributionSeries) -> np.ndarray:
    """Per-step L1 distance between ``evolve(A, z(1))`` and the series."""
    sim = evolve(A, series.points[0], len(series) - 1).points
    return np.abs(sim - series.points).sum(axis=1)


def match_series(series: DistributionSeries, D, mismatch_tol: float | None = 0.5) -> np.ndarray:
    """Time-invariant transition matrix from consecutive OT plans.

    If the free-run simulation from the first snapshot departs from the
    series by more than ``mismatch_tol`` (L1) at any step, a warning
    suggests smoothing the series more strongly.
    """
    if len(series) < 2:
        raise ValueError("need at least two snapshots")
    z = series.points
    plans = [solve_ot(z[t], z[t + 1], D) for t in range(len(series) - 1)]
    A = plan_to_transition(average_plan(plans))
    if mismatch_tol is not None:
        worst = free_run_mismatch(A, series).max()
        if worst > mismatch_tol:
            warnings.warn(
                f"free-run simulation deviates from the observed series (max L1 {worst:.3g}); "
                "consider stronger temporal smoothing",
                RuntimeWarning,
                stacklevel=2,
            )
    return A
