"""Markov chain estimation and distribution dynamics.

Transition matrices are column-stochastic: ``A[j, i]`` is the probability
of moving from state ``i + 1`` to state ``j + 1`` in one step (arrays are
0-based, state labels 1-based).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import LabeledSeries

__all__ = [
    "EventSet",
    "DistributionSeries",
    "NonErgodicError",
    "extract_events",
    "apply_resetting",
    "estimate_relative_frequency",
    "estimate_weighted",
    "apply_damping",
    "smooth_kernel",
    "evolve",
    "stationary",
    "reduce",
    "evolve_reduced",
    "is_column_stochastic",
]


class NonErgodicError(ValueError):
    """Raised when a stationary distribution cannot be determined."""


@dataclass(frozen=True)
class EventSet:
    """Multiset of one-step transitions ``(individual, time, from, to)``.

    ``reset`` records whether resetting events were appended (``None``,
    ``"loop"`` or ``"dummy"``) so it cannot be applied twice.
    """

    individuals: np.ndarray
    times: np.ndarray
    sources: np.ndarray
    targets: np.ndarray
    n_states: int
    reset: str | None = None

    def __post_init__(self):
        for name in ("individuals", "times", "sources", "targets"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        object.__setattr__(self, "sources", self.sources.astype(np.int64))
        object.__setattr__(self, "targets", self.targets.astype(np.int64))
        for arr in (self.sources, self.targets):
            if arr.size and (arr.min() < 1 or arr.max() > self.n_states):
                raise ValueError(f"event states must lie in 1..{self.n_states}")

    def __len__(self):
        return self.sources.size

    def counts(self) -> np.ndarray:
        """Count matrix ``C[j, i]`` = number of ``i -> j`` events (0-based indices)."""
        k = self.n_states
        flat = np.bincount((self.targets - 1) * k + (self.sources - 1), minlength=k * k)
        return flat.reshape(k, k)


@dataclass(frozen=True)
class DistributionSeries:
    """Time-stamped points of the probability simplex, one row per time."""

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        z = np.atleast_2d(np.asarray(self.points, dtype=float))
        if t.ndim != 1 or z.shape[0] != t.size:
            raise ValueError("times and points must have equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(z < 0) or np.any(np.abs(z.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("every point must be a probability distribution")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", z)

    def __len__(self):
        return self.times.size

    @property
    def n_states(self) -> int:
        return self.points.shape[1]


def is_column_stochastic(A, atol=1e-12) -> bool:
    A = np.asarray(A)
    return bool(np.all(A >= 0) and np.all(np.abs(A.sum(axis=0) - 1.0) <= atol))


def _ordered(series: LabeledSeries):
    _, codes = np.unique(series.individuals, return_inverse=True)
    codes = codes.ravel()
    order = np.lexsort((series.times, codes))
    return order, codes[order]


def extract_events(series: LabeledSeries, bridge_gaps: bool = False) -> EventSet:
    """One event per consecutive observed pair of the same individual.

    Pairs separated by missing time points are skipped unless
    ``bridge_gaps`` is set.
    """
    order, codes = _ordered(series)
    t = series.times[order]
    lab = series.labels[order]
    same = codes[1:] == codes[:-1]
    if not bridge_gaps:
        same &= (t[1:] - t[:-1]) == 1
    src = np.flatnonzero(same)
    return EventSet(
        series.individuals[order][src],
        t[src],
        lab[src],
        lab[src + 1],
        series.n_states,
    )


def apply_resetting(events: EventSet, series: LabeledSeries, dummy: bool = False) -> EventSet:
    """Close each individual's trajectory into a loop.

    Without ``dummy`` every individual contributes a ``last -> first``
    event. With ``dummy`` a state ``K + 1`` is added and each individual
    contributes ``last -> K+1`` and ``K+1 -> first``.
    """
    if events.reset is not None:
        raise ValueError(f"resetting already applied ({events.reset})")
    if len(series) == 0:
        raise ValueError("cannot reset an empty series")
    if series.n_states != events.n_states:
        raise ValueError("events and series disagree on the number of states")
    order, codes = _ordered(series)
    first = np.r_[True, codes[1:] != codes[:-1]]
    last = np.r_[codes[1:] != codes[:-1], True]
    ind = series.individuals[order][last]
    t_max = series.times[order][last]
    lab_first = series.labels[order][first]
    lab_last = series.labels[order][last]
    k = events.n_states
    if dummy:
        extra_ind = np.concatenate([ind, ind])
        extra_t = np.concatenate([t_max, t_max + 1])
        extra_src = np.concatenate([lab_last, np.full(ind.size, k + 1)])
        extra_dst = np.concatenate([np.full(ind.size, k + 1), lab_first])
        k += 1
    else:
        extra_ind, extra_t, extra_src, extra_dst = ind, t_max, lab_last, lab_first
    return EventSet(
        np.concatenate([events.individuals, extra_ind]),
        np.concatenate([events.times, extra_t]),
        np.concatenate([events.sources, extra_src]),
        np.concatenate([events.targets, extra_dst]),
        k,
        reset="dummy" if dummy else "loop",
    )


def _normalize_columns(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    tot = W.sum(axis=0)
    A = np.zeros_like(W)
    seen = tot > 0
    A[:, seen] = W[:, seen] / tot[seen]
    # unvisited states keep their mass (0/0 column)
    idx = np.flatnonzero(~seen)
    A[idx, idx] = 1.0
    return A


def estimate_relative_frequency(events: EventSet) -> np.ndarray:
    """Transition matrix from relative event frequencies."""
    return _normalize_columns(events.counts().astype(float))


def estimate_weighted(events: EventSet, eta: float = 1.0) -> np.ndarray:
    """Relative frequencies with per-individual weights ``1 / (n_m(i) + eta)``.

    ``n_m(i)`` is the number of events individual ``m`` starts from state
    ``i``, so individuals with many observations are down-weighted.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    k = events.n_states
    if len(events) == 0:
        return np.eye(k)
    _, m = np.unique(events.individuals, return_inverse=True)
    m = m.ravel()
    src = events.sources - 1
    dst = events.targets - 1
    # counts per (individual, source, target), then per (individual, source)
    triple, tinv, tcount = np.unique(np.stack([m, src, dst], axis=1), axis=0,
                                     return_inverse=True, return_counts=True)
    pair, pinv = np.unique(triple[:, :2], axis=0, return_inverse=True)
    n_mi = np.bincount(pinv.ravel(), weights=tcount)
    w = 1.0 / (n_mi + eta)
    # rescale per source state; the common factor cancels and M = 1 reproduces
    # the unweighted estimate bit for bit
    w_max = np.zeros(k)
    np.maximum.at(w_max, pair[:, 1], w)
    w = w / w_max[pair[:, 1]]
    W = np.zeros((k, k))
    np.add.at(W, (triple[:, 2], triple[:, 1]), w[pinv.ravel()] * tcount)
    return _normalize_columns(W)


def apply_damping(A, epsilon: float) -> np.ndarray:
    """PageRank-style damping ``(A + eps * ones) / (1 + eps * K)``."""
    A = np.asarray(A, dtype=float)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return (A + epsilon) / (1.0 + epsilon * A.shape[0])


def smooth_kernel(A, D, gamma: float) -> np.ndarray:
    """Nadaraya-Watson smoothing of columns with an RBF kernel on distances.

    Column ``i`` becomes the average of all columns ``j`` weighted by
    ``exp(-gamma * D[i, j]**2)``.
    """
    A = np.asarray(A, dtype=float)
    D = np.asarray(D, dtype=float)
    if D.shape != A.shape:
        raise ValueError("distance matrix and transition matrix shapes differ")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    with np.errstate(invalid="ignore"):
        W = np.exp(-gamma * D**2)
    W[np.isnan(W)] = 0.0  # gamma = 0 with infinite distances
    np.fill_diagonal(W, 1.0)
    W /= W.sum(axis=1, keepdims=True)
    return A @ W.T


def evolve(A, z0, steps: int, t0: float = 0.0) -> DistributionSeries:
    """Iterate ``z(t+1) = A z(t)``; returns ``steps + 1`` points starting at ``z0``."""
    A = np.asarray(A, dtype=float)
    z = np.asarray(z0, dtype=float)
    if z.shape != (A.shape[0],):
        raise ValueError("initial distribution does not match the matrix size")
    out = np.empty((steps + 1, z.size))
    out[0] = z
    for t in range(steps):
        out[t + 1] = A @ out[t]
    return DistributionSeries(t0 + np.arange(steps + 1, dtype=float), out)


def reduce(A):
    """Reduced ``(K-1)``-dimensional form of the chain.

    Returns ``(A_tilde, a, A_tilde_prime)`` where ``A_tilde`` is the leading
    ``(K-1) x (K-1)`` block, ``a`` the first ``K-1`` entries of the last
    column, and ``A_tilde_prime = A_tilde - a 1^T`` governs deviations from
    the stationary point: ``dz(t+1) = A_tilde_prime dz(t)``.
    """
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    if k < 2:
        raise ValueError("the reduced form needs at least two states")
    At = A[:-1, :-1].copy()
    a = A[:-1, -1].copy()
    return At, a, At - a[:, None]


def evolve_reduced(A, z0, steps: int) -> np.ndarray:
    """Evolve through the reduced system and lift back to K coordinates."""
    At, a, Atp = reduce(A)
    zs = _reduced_stationary(At, a)
    dz = np.asarray(z0, dtype=float)[:-1] - zs
    out = np.empty((steps + 1, At.shape[0] + 1))
    for t in range(steps + 1):
        zt = zs + dz
        out[t, :-1] = zt
        out[t, -1] = 1.0 - zt.sum()
        dz = Atp @ dz
    return out


def _reduced_stationary(At, a):
    M = np.eye(At.shape[0]) - At + a[:, None]
    try:
        return np.linalg.solve(M, a)
    except np.linalg.LinAlgError as exc:
        raise NonErgodicError("reduced stationary system is singular") from exc


def stationary(A, method: str = "reduced-form", tol: float = 1e-12, max_iter: int = 10**6) -> np.ndarray:
    """Stationary distribution of an ergodic column-stochastic matrix.

    ``method="reduced-form"`` solves ``(I - A_tilde + a 1^T) z_tilde = a``
    and appends ``1 - sum(z_tilde)``; ``method="power-iteration"`` iterates
    from the uniform distribution until successive iterates differ by less
    than ``tol`` in L1.
    """
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    if k == 1:
        return np.ones(1)
    if method == "reduced-form":
        zt = _reduced_stationary(*reduce(A)[:2])
        z = np.append(zt, 1.0 - zt.sum())
        if not np.all(np.isfinite(z)) or np.abs(A @ z - z).sum() > max(10 * tol, 1e-9):
            raise NonErgodicError("reduced-form solution is not stationary; is the chain ergodic?")
        z = np.clip(z, 0.0, None)
        return z / z.sum()
    if method == "power-iteration":
        z = np.full(k, 1.0 / k)
        for _ in range(max_iter):
            nxt = A @ z
            if np.abs(nxt - z).sum() < tol:
                return nxt / nxt.sum()
            z = nxt
        raise NonErgodicError(f"power iteration did not converge in {max_iter} steps")
    raise ValueError(f"unknown method {method!r}")
