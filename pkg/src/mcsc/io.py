"""CSV and JSON serialization of every artifact the pipeline produces.

All CSVs are UTF-8, comma-delimited, with a header row. Floats are written
with ``repr`` (shortest string that round-trips exactly), so reading a file
back reproduces the array bit for bit and repeated runs give identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .chain import DistributionSeries, EventSet, is_column_stochastic
from .control import ControlPlan
from .geometry import LabeledSeries, Partition
from .models import Trajectory

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "fmt",
    "write_csv",
    "read_csv",
    "write_json",
    "read_json",
    "write_partition",
    "read_partition",
    "write_matrix",
    "read_matrix",
    "write_distribution",
    "read_distribution",
    "matrix_to_json",
    "matrix_from_json",
    "write_events",
    "read_events",
    "write_labels",
    "read_labels",
    "write_series",
    "read_series",
    "write_transport_plan",
    "read_transport_plan",
    "write_control_plan",
    "control_summary",
    "write_trajectories",
    "read_trajectories",
]


def fmt(value) -> str:
    """Deterministic text form of a scalar cell."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "0.0" if v == 0 else repr(v)  # fold -0.0
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    """Return ``(header, rows)`` with every cell as a string."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: missing header row")
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not np.isfinite(v):
            return None
        return 0.0 if v == 0 else v
    return obj


def write_json(path, doc) -> None:
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# partition

def write_partition(path, partition: Partition) -> None:
    write_json(path, partition.to_dict())


def read_partition(path) -> Partition:
    return Partition.from_dict(read_json(path))


# transition matrices and distributions

def _labels(k):
    return [str(i) for i in range(1, k + 1)]


def write_matrix(path, A) -> None:
    """Dense row-major K x K matrix; the header holds the state labels."""
    A = np.asarray(A, dtype=float)
    write_csv(path, _labels(A.shape[1]), A.tolist())


def read_matrix(path, stochastic: bool = True, atol: float = 1e-9) -> np.ndarray:
    header, rows = read_csv(path)
    A = np.array([[float(v) for v in row] for row in rows], dtype=float)
    k = len(header)
    if A.shape != (k, k):
        raise ValueError(f"{path}: expected a {k} x {k} matrix, got {A.shape}")
    if stochastic and not is_column_stochastic(A, atol=atol):
        raise ValueError(f"{path}: not a column-stochastic matrix")
    return A


def write_distribution(path, z) -> None:
    z = np.asarray(z, dtype=float)
    write_csv(path, _labels(z.size), [z.tolist()])


def read_distribution(path, atol: float = 1e-9) -> np.ndarray:
    header, rows = read_csv(path)
    if len(rows) != 1 or len(rows[0]) != len(header):
        raise ValueError(f"{path}: expected a single row of {len(header)} values")
    z = np.array([float(v) for v in rows[0]])
    if np.any(z < 0) or abs(z.sum() - 1.0) > atol:
        raise ValueError(f"{path}: not a probability distribution")
    return z


def matrix_to_json(A) -> dict:
    A = np.asarray(A, dtype=float)
    return {"kind": "transition_matrix", "n_states": A.shape[0], "data": A.tolist()}


def matrix_from_json(doc) -> np.ndarray:
    A = np.asarray(doc["data"], dtype=float)
    if A.shape != (doc["n_states"], doc["n_states"]) or not is_column_stochastic(A, atol=1e-9):
        raise ValueError("document does not hold a valid transition matrix")
    return A


# events and labels

def write_events(path, events: EventSet) -> None:
    rows = zip(events.individuals.tolist(), events.times.tolist(),
               events.sources.tolist(), events.targets.tolist())
    write_csv(path, ["m", "t", "i", "j"], rows)


def read_events(path, n_states: int, reset=None) -> EventSet:
    _, rows = read_csv(path)
    cols = list(zip(*rows)) if rows else [(), (), (), ()]
    return EventSet(
        np.array(cols[0], dtype=object),
        np.array([int(v) for v in cols[1]], dtype=np.int64),
        np.array([int(v) for v in cols[2]], dtype=np.int64),
        np.array([int(v) for v in cols[3]], dtype=np.int64),
        n_states,
        reset=reset,
    )


def write_labels(path, series: LabeledSeries) -> None:
    rows = zip(series.individuals.tolist(), series.times.tolist(), series.labels.tolist())
    write_csv(path, ["individual_id", "t", "label"], rows)


def read_labels(path, n_states: int) -> LabeledSeries:
    _, rows = read_csv(path)
    if not rows:
        raise ValueError(f"{path}: no labelled observations")
    ind, t, lab = zip(*rows)
    return LabeledSeries(np.array(ind, dtype=object), np.array([int(v) for v in t], dtype=np.int64),
                         np.array([int(v) for v in lab], dtype=np.int64), n_states)


# distribution series and transport plans

def write_series(path, series: DistributionSeries) -> None:
    header = ["time"] + [f"z_{k}" for k in range(1, series.n_states + 1)]
    rows = ([t] + z for t, z in zip(series.times.tolist(), series.points.tolist()))
    write_csv(path, header, rows)


def read_series(path) -> DistributionSeries:
    header, rows = read_csv(path)
    if len(header) < 2 or header[0] != "time":
        raise ValueError(f"{path}: expected columns time, z_1..z_K")
    data = np.array([[float(v) for v in row] for row in rows], dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    return DistributionSeries(data[:, 0], data[:, 1:])


def write_transport_plan(path, F) -> None:
    write_matrix(path, F)


def read_transport_plan(path) -> np.ndarray:
    return read_matrix(path, stochastic=False)


# control

def write_control_plan(path, plan: ControlPlan) -> None:
    E = plan.controlled
    rows = [(i, j, plan.A[j - 1, i - 1], E[j - 1, i - 1], c) for i, j, c in plan.interventions]
    write_csv(path, ["from_state", "to_state", "original_prob", "controlled_prob",
                     "cumulative_suppression"], rows)


def control_summary(plan: ControlPlan, config) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "lambda1": config.lambda1,
        "lambda2": config.lambda2,
        "H": list(config.H),
        "horizon": config.horizon,
        "iterations": len(plan.steps),
        "G_trace": list(plan.objective_trace),
        "interventions": [
            {"from_state": i, "to_state": j, "cumulative_suppression": c}
            for i, j, c in plan.interventions
        ],
    }


# trajectories

def write_trajectories(path, trajectories) -> None:
    trajectories = list(trajectories)
    n = trajectories[0].n_dims if trajectories else 0
    header = ["individual_id", "t"] + [f"x_{d}" for d in range(1, n + 1)]

    def rows():
        for tr in trajectories:
            for t, p in zip(tr.times.tolist(), tr.points.tolist()):
                yield [tr.individual_id, t] + p

    write_csv(path, header, rows())


def read_trajectories(path) -> list:
    header, rows = read_csv(path)
    if header[:2] != ["individual_id", "t"] or len(header) < 3:
        raise ValueError(f"{path}: expected columns individual_id, t, x_1..x_N")
    groups: dict = {}
    for row in rows:
        groups.setdefault(row[0], []).append(row)
    out = []
    for ind, block in groups.items():
        t = np.array([int(r[1]) for r in block], dtype=np.int64)
        pts = np.array([[float(v) for v in r[2:]] for r in block], dtype=float)
        order = np.argsort(t, kind="stable")
        out.append(Trajectory(ind, t[order], pts[order]))
    return out
