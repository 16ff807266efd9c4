"""Sparse suppression control of a Markov chain.

A control ``A'`` modifies the transition matrix to ``A + A'``. Only
suppressions are designed here: a fraction ``h`` of the current
probability of ``i -> j`` is moved onto the self-transition ``i -> i``, so
every column of ``A'`` sums to zero and ``A + A'`` stays stochastic.

The objective rewards the (stationary or finite-horizon) distribution of
the controlled chain and penalizes the number of nonzero entries of ``A'``
and the total absolute log fold-change of the modified entries::

    G = r . z' - lambda1 * nnz(A') - lambda2 * sum_{A_ij != 0} |log((A_ij + A'_ij) / A_ij)|
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import DistributionSeries, evolve, reduce, stationary

__all__ = [
    "ControlConfig",
    "ControlPlan",
    "InfeasibleControlError",
    "NNZ_TOL",
    "objective",
    "candidate_set",
    "apply_suppression",
    "greedy_optimize",
    "simulate_controlled",
]

NNZ_TOL = 1e-15


class InfeasibleControlError(ValueError):
    """``A + A'`` is not a valid transition matrix or zeroes a transition of ``A``."""


@dataclass
class ControlConfig:
    """Settings of the objective and the greedy search.

    ``horizon=None`` scores the stationary distribution of ``A + A'``; an
    integer ``tau`` scores ``(A + A')**(tau - 1) @ z_init`` instead.
    ``ranking`` selects how off-diagonal candidates are ranked: by
    transition probability (``"value"``) or by probability flow
    ``z_i * A_ji`` (``"flow"``).
    """

    lambda1: float = 0.1
    lambda2: float = 0.1
    H: tuple = (0.5, 0.8, 0.9)
    candidate_fraction: float = 0.2
    horizon: int | None = None
    z_init: np.ndarray | None = None
    probe_suppression: float = 0.1
    ranking: str = "value"
    count_compensation: bool = True
    repeat_sites: bool = True
    max_iter: int = 10_000

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularization weights must be nonnegative")
        self.H = tuple(sorted(float(h) for h in self.H))
        if not self.H or any(not 0 < h < 1 for h in self.H):
            raise ValueError("suppression levels must lie in (0, 1)")
        if not 0 < self.candidate_fraction <= 1:
            raise ValueError("candidate_fraction must lie in (0, 1]")
        if not 0 < self.probe_suppression < 1:
            raise ValueError("probe_suppression must lie in (0, 1)")
        if self.ranking not in ("value", "flow"):
            raise ValueError(f"unknown ranking {self.ranking!r}")
        if self.horizon is not None:
            self.horizon = int(self.horizon)
            if self.horizon < 1:
                raise ValueError("horizon must be at least 1")
            if self.z_init is None:
                raise ValueError("a finite horizon needs an initial distribution z_init")
            self.z_init = np.asarray(self.z_init, dtype=float)


@dataclass
class ControlPlan:
    """Result of :func:`greedy_optimize`.

    ``interventions`` lists distinct suppressed transitions as
    ``(from_state, to_state, cumulative_suppression)`` with 1-based states,
    in the order they were first chosen. ``steps`` lists every committed
    greedy move ``(from_state, to_state, h)`` and ``objective_trace`` the
    objective before the first move and after each one.
    """

    A: np.ndarray
    A_prime: np.ndarray
    interventions: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    @property
    def controlled(self) -> np.ndarray:
        return self.A + self.A_prime

    @property
    def n_interventions(self) -> int:
        return len(self.interventions)


def _controlled_distribution(E, config: ControlConfig) -> np.ndarray:
    if config.horizon is None:
        return stationary(E)
    return evolve(E, config.z_init, config.horizon - 1).points[-1]


def _nnz(Ap, config):
    nz = np.abs(Ap) > NNZ_TOL
    if not config.count_compensation:
        np.fill_diagonal(nz, False)
    return int(np.count_nonzero(nz))


def _logfold(A, E):
    mask = A != 0
    return np.abs(np.log(E[mask] / A[mask])).sum()


def objective(A, A_prime, r, config: ControlConfig) -> float:
    """Objective ``G`` of the control ``A_prime`` applied to ``A``."""
    A = np.asarray(A, dtype=float)
    Ap = np.asarray(A_prime, dtype=float)
    E = A + Ap
    if np.any(E < -NNZ_TOL) or np.any(np.abs(Ap.sum(axis=0)) > 1e-12):
        raise InfeasibleControlError("A + A' must be nonnegative with unchanged column sums")
    if np.any((A != 0) & (E <= 0)):
        raise InfeasibleControlError("control removes a transition completely (log fold-change diverges)")
    z = _controlled_distribution(E, config)
    nnz = _nnz(Ap, config)
    return float(np.dot(r, z) - config.lambda1 * nnz - config.lambda2 * _logfold(A, E))


def _rank_candidates(E, fraction, ranking="value", z=None):
    k = E.shape[0]
    dst, src = np.nonzero(~np.eye(k, dtype=bool))
    score = E[dst, src]
    if ranking == "flow":
        score = score * z[src]
    n_keep = min(dst.size, math.ceil(fraction * dst.size - 1e-9))
    order = np.lexsort((src, dst, -score))[:n_keep]
    return src[order], dst[order]


def candidate_set(A, fraction=0.2, ranking="value", z=None) -> list:
    """Top ``ceil(fraction * K * (K - 1))`` off-diagonal transitions.

    Ranked by probability (or flow ``z_i * A_ji``), descending; ties go to
    the lower matrix (row, column). Returns 1-based ``(from, to)`` pairs.
    """
    E = np.asarray(A, dtype=float)
    if ranking == "flow" and z is None:
        z = stationary(E)
    src, dst = _rank_candidates(E, fraction, ranking, z)
    return [(int(i) + 1, int(j) + 1) for i, j in zip(src, dst)]


def apply_suppression(A, A_prime, site, h) -> np.ndarray:
    """Suppress transition ``site = (from, to)`` by fraction ``h``.

    The removed probability ``h * (A + A')[to, from]`` is added to the
    self-transition of the source state. Returns a new ``A_prime``.
    """
    i, j = site[0] - 1, site[1] - 1
    if i == j:
        raise ValueError("only off-diagonal transitions can be suppressed")
    Ap = np.array(A_prime, dtype=float)
    e = A[j, i] + Ap[j, i]
    if not e > 0:
        raise InfeasibleControlError(f"transition {site[0]} -> {site[1]} has zero probability")
    Ap[j, i] -= h * e
    Ap[i, i] += h * e
    return Ap


class _Scorer:
    """Objective of many single suppressions applied to the current ``A + A'``.

    Stationary rewards use Sherman-Morrison updates of the reduced system
    ``(I - A_tilde + a 1^T) z_tilde = a``; every candidate changes a single
    column of the chain, so one inverse per greedy iteration suffices.
    """

    def __init__(self, A, Ap, r, config):
        self.A, self.Ap, self.r, self.config = A, Ap, np.asarray(r, dtype=float), config
        self.E = A + Ap
        k = A.shape[0]
        if config.horizon is None:
            if k == 1:
                raise ValueError("a single state cannot be controlled")
            At, a, _ = reduce(self.E)
            n = k - 1
            self.P = np.linalg.inv(np.eye(n) - At + a[:, None])
            self.zt = self.P @ a
            rt = self.r[:n] - self.r[n]
            self.q = rt @ self.P
            self.s = self.P.sum(axis=0)
            self.base_reward = self.r[n] + rt @ self.zt
            self.z = np.append(self.zt, 1.0 - self.zt.sum())
        else:
            self.z = evolve(self.E, config.z_init, config.horizon - 1).points[-1]
            self.base_reward = float(self.r @ self.z)
        self.nnz = _nnz(Ap, config)
        self.logfold = _logfold(A, self.E)

    def rewards(self, src, dst, h):
        """Expected reward after suppressing each ``src -> dst`` by ``h``."""
        delta = h * self.E[dst, src]
        if self.config.horizon is not None:
            return self._horizon_rewards(src, dst, delta)
        n = self.A.shape[0] - 1
        out = np.empty(src.size)
        inner = src < n
        # column src < K-1 of A_tilde moves; the last column (vector a) does not
        i, j, d = src[inner], dst[inner], delta[inner]
        jn = j < n
        jc = np.where(jn, j, 0)
        q_u = d * (self.q[i] - np.where(jn, self.q[jc], 0.0))
        pu_i = d * (self.P[i, i] - np.where(jn, self.P[i, jc], 0.0))
        out[inner] = self.base_reward + q_u * self.zt[i] / (1.0 - pu_i)
        # source is the last state: the vector a loses mass at dst
        j, d = dst[~inner], delta[~inner]
        q_u = -d * self.q[j]
        s_u = -d * self.s[j]
        s_y = self.zt.sum() + s_u
        out[~inner] = self.base_reward + q_u * (1.0 - s_y / (1.0 + s_u))
        return out

    def _horizon_rewards(self, src, dst, delta):
        cols = np.arange(src.size)
        Z = np.repeat(self.config.z_init[:, None], src.size, axis=1)
        for _ in range(self.config.horizon - 1):
            moved = delta * Z[src, cols]
            Z = self.E @ Z
            Z[src, cols] += moved
            Z[dst, cols] -= moved
        return self.r @ Z

    def penalties(self, src, dst, h):
        A, Ap, E = self.A, self.Ap, self.E
        delta = h * E[dst, src]
        old_ji, old_ii = Ap[dst, src], Ap[src, src]
        new_ji, new_ii = old_ji - delta, old_ii + delta
        nz = lambda v: (np.abs(v) > NNZ_TOL).astype(int)
        nnz = self.nnz - nz(old_ji) + nz(new_ji)
        if self.config.count_compensation:
            nnz = nnz - nz(old_ii) + nz(new_ii)

        def lf(a, e):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(a != 0, np.abs(np.log(e / np.where(a != 0, a, 1.0))), 0.0)

        a_ji, a_ii = A[dst, src], A[src, src]
        logfold = (self.logfold - lf(a_ji, E[dst, src]) - lf(a_ii, E[src, src])
                   + lf(a_ji, A[dst, src] + new_ji) + lf(a_ii, A[src, src] + new_ii))
        return self.config.lambda1 * nnz + self.config.lambda2 * logfold


def greedy_optimize(A, r, config: ControlConfig) -> ControlPlan:
    """Greedy sparse suppression design.

    Each iteration ranks off-diagonal transitions of the current controlled
    matrix, keeps the top ``candidate_fraction``, drops candidates whose
    slight suppression (``probe_suppression``) lowers the expected reward,
    and evaluates every remaining candidate at every level in ``H``. The
    best move (highest objective, then smaller ``h``, then lower
    ``(from, to)``) is committed if it strictly improves the objective;
    otherwise the search stops.
    """
    A = np.asarray(A, dtype=float)
    r = np.asarray(r, dtype=float)
    k = A.shape[0]
    if A.shape != (k, k) or r.shape != (k,):
        raise ValueError("A must be K x K and r of length K")
    Ap = np.zeros_like(A)
    G = objective(A, Ap, r, config)
    plan = ControlPlan(A.copy(), Ap, objective_trace=[G])
    for _ in range(config.max_iter):
        scorer = _Scorer(A, Ap, r, config)
        src, dst = _rank_candidates(scorer.E, config.candidate_fraction, config.ranking, scorer.z)
        live = scorer.E[dst, src] > 0
        if not config.repeat_sites:
            live &= np.abs(Ap[dst, src]) <= NNZ_TOL
        src, dst = src[live], dst[live]
        if src.size:
            probe = scorer.rewards(src, dst, config.probe_suppression)
            keep = probe >= scorer.base_reward
            src, dst = src[keep], dst[keep]
        if src.size == 0:
            break
        H = np.asarray(config.H)
        scores = np.stack([scorer.rewards(src, dst, h) - scorer.penalties(src, dst, h) for h in H])
        hh = np.repeat(H, src.size)
        ii = np.tile(src, H.size)
        jj = np.tile(dst, H.size)
        flat = scores.ravel()
        flat = np.where(np.isfinite(flat), flat, -np.inf)
        best = np.lexsort((jj, ii, hh, -flat))[0]
        site = (int(ii[best]) + 1, int(jj[best]) + 1)
        trial = apply_suppression(A, Ap, site, hh[best])
        G_new = objective(A, trial, r, config)
        if not G_new > G:
            break
        Ap, G = trial, G_new
        plan.objective_trace.append(G)
        plan.steps.append((site[0], site[1], float(hh[best])))
    plan.A_prime = Ap
    seen = []
    for i, j, _ in plan.steps:
        if (i, j) not in seen:
            seen.append((i, j))
    E = A + Ap
    plan.interventions = [(i, j, float(1.0 - E[j - 1, i - 1] / A[j - 1, i - 1])) for i, j in seen]
    return plan


def simulate_controlled(A, A_prime, z0, steps: int) -> DistributionSeries:
    """Distribution dynamics ``z(t+1) = (A + A') z(t)``."""
    return evolve(np.asarray(A) + np.asarray(A_prime), z0, steps)
