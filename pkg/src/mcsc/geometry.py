"""State-space discretization.

A :class:`Partition` splits R^N into K labelled cells, either as the
Cartesian product of per-axis bins or as the Voronoi diagram of K
representative points. Labels are 1-based throughout the public API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "LabeledSeries",
    "Partition",
    "KMeansResult",
    "partition_per_axis",
    "encode_bins",
    "decode_label",
    "lloyd",
    "fit_kmeans",
    "sample_representatives",
    "assign",
    "pairwise_distances",
    "label_series",
]


@dataclass(frozen=True)
class LabeledSeries:
    """Discretized longitudinal records ``(individual, time, label)``.

    Parameters
    ----------
    individuals : array_like
        Opaque individual tokens, one per record.
    times : array_like of int
        Integer time index of each record.
    labels : array_like of int
        State label of each record, in ``1..n_states``.
    n_states : int
        Number of states K.
    """

    individuals: np.ndarray
    times: np.ndarray
    labels: np.ndarray
    n_states: int

    def __post_init__(self):
        ind = np.asarray(self.individuals)
        t = np.asarray(self.times)
        lab = np.asarray(self.labels)
        if not (ind.shape == t.shape == lab.shape) or ind.ndim != 1:
            raise ValueError("individuals, times and labels must be 1-D arrays of equal length")
        if t.size and not np.issubdtype(t.dtype, np.integer):
            if not np.all(np.equal(np.mod(t, 1), 0)):
                raise ValueError("time indices must be integers")
            t = t.astype(np.int64)
        lab = lab.astype(np.int64)
        if lab.size and (lab.min() < 1 or lab.max() > self.n_states):
            raise ValueError(f"labels must lie in 1..{self.n_states}")
        if ind.size:
            _, codes = np.unique(ind, return_inverse=True)
            keys = np.stack([codes.ravel(), t], axis=1)
            if np.unique(keys, axis=0).shape[0] != keys.shape[0]:
                raise ValueError("(individual, time) pairs must be unique")
        object.__setattr__(self, "individuals", ind)
        object.__setattr__(self, "times", t.astype(np.int64))
        object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.labels.size

    def histogram(self) -> np.ndarray:
        """Empirical label frequencies as a length-K distribution."""
        counts = np.bincount(self.labels - 1, minlength=self.n_states).astype(float)
        return counts / counts.sum()


@dataclass(frozen=True)
class Partition:
    """A disjoint, exhaustive split of R^N into ``n_states`` labelled cells.

    ``kind`` is ``"per-axis"`` (``edges`` holds one strictly increasing
    boundary vector per dimension) or ``"representatives"``
    (``representatives`` is a ``(K, N)`` array, cells are Voronoi regions
    under ``distance``, any :func:`scipy.spatial.distance.cdist` metric).
    """

    kind: str
    edges: tuple | None = None
    representatives: np.ndarray | None = None
    distance: str = "euclidean"
    _bins: tuple = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        if self.kind == "per-axis":
            if not self.edges:
                raise ValueError("per-axis partition needs edges")
            edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
            for e in edges:
                if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0) or not np.all(np.isfinite(e)):
                    raise ValueError("bin edges must be finite and strictly increasing")
                e.setflags(write=False)
            object.__setattr__(self, "edges", edges)
            object.__setattr__(self, "_bins", tuple(e.size - 1 for e in edges))
        elif self.kind == "representatives":
            reps = np.array(self.representatives, dtype=float)
            if reps.ndim == 1:
                reps = reps[:, None]
            if reps.ndim != 2 or reps.shape[0] < 1:
                raise ValueError("representatives must be a (K, N) array")
            if np.unique(reps, axis=0).shape[0] != reps.shape[0]:
                raise ValueError("representative points must be distinct")
            reps.setflags(write=False)
            object.__setattr__(self, "representatives", reps)
        else:
            raise ValueError(f"unknown partition kind {self.kind!r}")

    @property
    def n_states(self) -> int:
        if self.kind == "per-axis":
            return prod(self._bins)
        return self.representatives.shape[0]

    @property
    def n_dims(self) -> int:
        if self.kind == "per-axis":
            return len(self.edges)
        return self.representatives.shape[1]

    @property
    def bins(self) -> tuple:
        return self._bins

    def centers(self) -> np.ndarray:
        """Representative points, or cell midpoints for per-axis partitions, in label order."""
        if self.kind == "representatives":
            return self.representatives
        mids = [0.5 * (e[:-1] + e[1:]) for e in self.edges]
        grids = np.meshgrid(*mids, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def assign(self, points) -> np.ndarray:
        """Vectorized label lookup for an ``(n, N)`` array; returns 1-based labels."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None] if self.n_dims == 1 else pts[None, :]
        if pts.shape[1] != self.n_dims:
            raise ValueError(f"expected points of dimension {self.n_dims}, got {pts.shape[1]}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if self.kind == "per-axis":
            # searchsorted on interior edges clamps out-of-range points to boundary bins
            idx = np.stack(
                [np.searchsorted(e[1:-1], pts[:, d], side="right") for d, e in enumerate(self.edges)],
                axis=1,
            )
            return encode_bins(idx + 1, self._bins)
        out = np.empty(pts.shape[0], dtype=np.int64)
        step = max(1, 2_000_000 // max(1, self.n_states))
        for start in range(0, pts.shape[0], step):
            d = cdist(pts[start:start + step], self.representatives, metric=self.distance)
            out[start:start + step] = np.argmin(d, axis=1) + 1
        return out

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "distance": self.distance}
        if self.kind == "per-axis":
            doc["edges"] = [[float(v) for v in e] for e in self.edges]
        else:
            doc["representatives"] = [[float(v) for v in row] for row in self.representatives]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Partition":
        if doc["kind"] == "per-axis":
            return cls("per-axis", edges=tuple(doc["edges"]), distance=doc.get("distance", "euclidean"))
        return cls(
            "representatives",
            representatives=np.asarray(doc["representatives"], dtype=float),
            distance=doc.get("distance", "euclidean"),
        )


def encode_bins(indices, bins) -> np.ndarray:
    """Mixed-radix label of 1-based per-axis bin indices (axis 1 most significant)."""
    idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    label = np.zeros(idx.shape[0], dtype=np.int64)
    for d, b in enumerate(bins):
        label = label * b + (idx[:, d] - 1)
    return label + 1


def decode_label(labels, bins) -> np.ndarray:
    """Inverse of :func:`encode_bins`; returns an ``(n, N)`` array of 1-based bin indices."""
    rest = np.atleast_1d(np.asarray(labels, dtype=np.int64)) - 1
    out = np.empty((rest.size, len(bins)), dtype=np.int64)
    for d in range(len(bins) - 1, -1, -1):
        out[:, d] = rest % bins[d] + 1
        rest = rest // bins[d]
    return out


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError("points must be an (n, N) array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


def partition_per_axis(data_points, bins_per_axis, edge_rule="quantile", bounds=None) -> Partition:
    """Cartesian-product partition built from per-axis bins.

    Parameters
    ----------
    data_points : array_like, shape (n, N)
        Data used to place the edges. May be empty when ``bounds`` is given
        together with ``edge_rule="uniform-range"``.
    bins_per_axis : sequence of int
        Number of bins along each axis; K is their product.
    edge_rule : {"quantile", "uniform-range"}
        Quantile edges put equal counts in every bin of an axis;
        uniform-range edges split ``[min, max]`` evenly.
    bounds : sequence of (low, high), optional
        Explicit per-axis range for ``"uniform-range"``.
    """
    bins = [int(b) for b in bins_per_axis]
    if not bins or any(b < 1 for b in bins):
        raise ValueError("bin counts must be positive")
    n_dims = len(bins)
    pts = None
    if data_points is not None and np.size(data_points):
        pts = _as_points(data_points)
        if pts.shape[1] != n_dims:
            raise ValueError(f"data has {pts.shape[1]} dimensions, bins given for {n_dims}")
    edges = []
    for d, b in enumerate(bins):
        if edge_rule == "quantile":
            if pts is None:
                raise ValueError("quantile edges need data points")
            e = np.quantile(pts[:, d], np.linspace(0.0, 1.0, b + 1))
            if np.any(np.diff(e) <= 0):
                raise ValueError(f"axis {d + 1}: too many ties for {b} quantile bins")
        elif edge_rule == "uniform-range":
            if bounds is not None:
                lo, hi = map(float, bounds[d])
            elif pts is not None:
                lo, hi = pts[:, d].min(), pts[:, d].max()
            else:
                raise ValueError("uniform-range edges need data points or bounds")
            if not hi > lo:
                raise ValueError(f"axis {d + 1}: degenerate range")
            e = np.linspace(lo, hi, b + 1)
        else:
            raise ValueError(f"unknown edge rule {edge_rule!r}")
        edges.append(e)
    return Partition("per-axis", edges=tuple(edges))


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray  # 0-based cluster index per point
    inertia_history: list
    n_iter: int
    converged: bool


def _check_distinct(pts, k):
    if k < 1:
        raise ValueError("K must be positive")
    n_distinct = np.unique(pts, axis=0).shape[0]
    if n_distinct < k:
        raise ValueError(f"need at least K={k} distinct points, got {n_distinct}")


def _kmeanspp(pts, k, rng):
    n = pts.shape[0]
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(n)]
    closest = np.sum((pts - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        # total > 0 is guaranteed while fewer than n_distinct centers are placed
        idx = rng.choice(n, p=closest / total)
        centers[c] = pts[idx]
        closest = np.minimum(closest, np.sum((pts - centers[c]) ** 2, axis=1))
    return centers


def lloyd(points, k, seed=0, max_iter=300) -> KMeansResult:
    """Lloyd's algorithm with seeded k-means++ initialization.

    Stops at an assignment fixpoint or after ``max_iter`` sweeps. An empty
    cluster is repaired by moving the point farthest from its center into
    it. ``inertia_history`` records the within-cluster sum of squares after
    every sweep and is non-increasing.
    """
    pts = _as_points(points)
    _check_distinct(pts, k)
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(pts, k, rng)
    labels = None
    history = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = cdist(pts, centers, metric="sqeuclidean")
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            own = d2[np.arange(pts.shape[0]), new]
            own[counts[new] <= 1] = -1.0  # never strip a cluster down to empty
            far = int(np.argmax(own))
            counts[new[far]] -= 1
            new[far] = empty
            counts[empty] = 1
            d2[far, empty] = 0.0
        if labels is not None and np.array_equal(new, labels):
            converged = True
            break
        labels = new
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, pts)
        centers = sums / np.bincount(labels, minlength=k)[:, None]
        history.append(float(np.sum((pts - centers[labels]) ** 2)))
    return KMeansResult(centers, labels, history, n_iter, converged)


def fit_kmeans(points, K, seed=0, max_iter=300, distance="euclidean") -> Partition:
    """Voronoi partition whose representatives are k-means cluster centers."""
    res = lloyd(points, K, seed=seed, max_iter=max_iter)
    return Partition("representatives", representatives=res.centers, distance=distance)


def sample_representatives(points, K, seed=0, distance="euclidean") -> Partition:
    """Voronoi partition on K distinct data points drawn without replacement."""
    pts = _as_points(points)
    _check_distinct(pts, K)
    uniq = np.unique(pts, axis=0)
    rng = np.random.default_rng(seed)
    pick = rng.choice(uniq.shape[0], size=K, replace=False)
    return Partition("representatives", representatives=uniq[pick], distance=distance)


def assign(partition: Partition, point) -> int:
    """Label of a single point; nearest representative with ties to the lowest index."""
    p = np.asarray(point, dtype=float).ravel()
    if p.size != partition.n_dims:
        raise ValueError(f"expected a point of dimension {partition.n_dims}, got {p.size}")
    return int(partition.assign(p[None, :])[0])


def pairwise_distances(partition: Partition) -> np.ndarray:
    """K x K distances between representatives (cell centers for per-axis)."""
    c = partition.centers()
    return cdist(c, c, metric=partition.distance)


def label_series(partition: Partition, individuals, times, points) -> LabeledSeries:
    return LabeledSeries(
        np.asarray(individuals), np.asarray(times), partition.assign(points), partition.n_states
    )
