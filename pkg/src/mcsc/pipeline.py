"""Config-driven pipeline: simulate or ingest, discretize, estimate, control, evolve, report.

Every stage reads the artifacts of the previous stages from the output
directory and writes its own, so each one can also run on its own. The
run summary (``summary.json``) records which stages ran, in which order,
and with which parameters.

Config schema (JSON; every section except ``input`` is optional)::

    {
      "seed": 0,
      "input": {"model": {"name": "dw1", "T": 10000, ...}}
             | {"csv": {"path": ..., "individual": ..., "time": ...,
                        "variables": [...], "categorical": [...],
                        "malformed_tolerance": 0.0}}
             | {"distribution_series": {"path": ..., "coordinates": ...}},
      "partition": {"kind": "per-axis", "bins": [20], "edge_rule": "quantile", "bounds": null}
                 | {"kind": "kmeans", "K": 50, "seed": 0, "max_iter": 300}
                 | {"kind": "sample", "K": 50, "seed": 0},
      "estimator": {"method": "relative" | "weighted", "eta": 1.0, "gamma": null,
                    "epsilon": 1e-10, "resetting": "off" | "loop" | "dummy",
                    "bridge_gaps": false},
      "matching": {"method": "ot", "grid": null | {"start":, "stop":, "num":},
                   "smooth_window": 0, "mismatch_tol": 0.5},
      "control": {"lambda1": 0.1, "lambda2": 0.1, "H": [0.5, 0.8, 0.9],
                  "candidate_fraction": 0.2, "horizon": null | int | "auto",
                  "probe_suppression": 0.1, "ranking": "value",
                  "reward": {"values": [...]}
                          | {"targets": [...], "inside": 1, "outside": 0}
                          | {"rules": [{"when": [{"axis": 1, "op": "<", "value": 0}],
                                        "value": 1}], "default": 0}},
      "simulation": {"steps": null},
      "outputs": {"dir": "mcsc-out"}
    }
"""

from __future__ import annotations

import copy
import json
import os
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from . import io
from .chain import (NonErgodicError, apply_damping, apply_resetting, estimate_relative_frequency,
                    estimate_weighted, evolve, extract_events, smooth_kernel, stationary)
from .control import ControlConfig, InfeasibleControlError, greedy_optimize
from .geometry import (Partition, fit_kmeans, label_series, pairwise_distances,
                       partition_per_axis, sample_representatives)
from .models import SimConfig, Trajectory, simulate
from .transport import average_plan, match_series, regrid_series, solve_ot

__all__ = [
    "PipelineError",
    "DataWarning",
    "STAGES",
    "load_config",
    "apply_overrides",
    "resolve_reward",
    "ingest_csv",
    "run_stage",
    "run_pipeline",
    "emit_report",
]

STAGES = ("simulate", "discretize", "estimate", "control", "evolve", "report")

F_TRAJ = "trajectories.csv"
F_PART = "partition.json"
F_LABELS = "labels.csv"
F_SERIES = "series.csv"
F_EVENTS = "events.csv"
F_PLAN_OT = "transport_plan.csv"
F_A = "transition_matrix.csv"
F_ZINIT = "initial_distribution.csv"
F_CPLAN = "control_plan.csv"
F_APRIME = "A_prime.csv"
F_ACTRL = "controlled_matrix.csv"
F_CJSON = "control.json"
F_EVO_U = "evolution_uncontrolled.csv"
F_EVO_C = "evolution_controlled.csv"
F_STAT_U = "stationary_uncontrolled.csv"
F_STAT_C = "stationary_controlled.csv"
F_REP_DIST = "report_distributions.csv"
F_REP_ARROWS = "report_interventions.csv"
F_REP_GROUPS = "report_groups.csv"
F_SUMMARY = "summary.json"
_ARTIFACTS = [v for k, v in list(globals().items()) if k.startswith("F_")]


class PipelineError(Exception):
    """Failure of one pipeline stage with a machine-readable ``code``."""

    def __init__(self, stage: str, code: str, message: str):
        super().__init__(f"[{stage}:{code}] {message}")
        self.stage = stage
        self.code = code
        self.message = message


class DataWarning(UserWarning):
    """Input rows were dropped or columns look unsuitable."""


# configuration

_SECTIONS = {"seed", "input", "partition", "estimator", "matching", "control", "simulation",
             "outputs"}


def _schema(msg):
    return PipelineError("config", "schema", msg)


def load_config(source) -> dict:
    """Read and validate a JSON config (path or dict). Relative input paths
    are resolved against the config file's directory."""
    if isinstance(source, dict):
        cfg, base = copy.deepcopy(source), Path.cwd()
    else:
        path = Path(source)
        try:
            cfg = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise PipelineError("config", "unreadable", f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise PipelineError("config", "invalid_json", f"{path}: {exc}") from exc
        base = path.resolve().parent
    if not isinstance(cfg, dict):
        raise _schema("config must be a JSON object")
    unknown = set(cfg) - _SECTIONS
    if unknown:
        raise _schema(f"unknown top-level keys {sorted(unknown)}")
    inp = cfg.get("input")
    if not isinstance(inp, dict) or len(inp) != 1:
        raise _schema("input must name exactly one source: model, csv or distribution_series")
    (src, spec), = inp.items()
    if src not in ("model", "csv", "distribution_series"):
        raise _schema(f"unknown input source {src!r}")
    if not isinstance(spec, dict):
        raise _schema(f"input.{src} must be an object")
    if src == "model" and "name" not in spec:
        raise _schema("input.model needs a name")
    if src in ("csv", "distribution_series"):
        if "path" not in spec:
            raise _schema(f"input.{src} needs a path")
        for key in ("path", "coordinates"):
            if spec.get(key) is not None and f"_{key}_resolved" not in spec:
                spec[f"_{key}_resolved"] = str((base / spec[key]).resolve())
    if src == "csv":
        for key in ("individual", "time"):
            if not isinstance(spec.get(key), str):
                raise _schema(f"input.csv.{key} must name a column")
        if not spec.get("variables"):
            raise _schema("input.csv.variables must list at least one column")
    part = cfg.setdefault("partition", {"kind": "per-axis", "bins": [20]})
    if src != "distribution_series" and part.get("kind") not in ("per-axis", "kmeans", "sample"):
        raise _schema("partition.kind must be per-axis, kmeans or sample")
    est = cfg.setdefault("estimator", {})
    if est.get("method", "relative") not in ("relative", "weighted"):
        raise _schema("estimator.method must be relative or weighted")
    if est.get("resetting", "off") not in ("off", "loop", "dummy"):
        raise _schema("estimator.resetting must be off, loop or dummy")
    ctl = cfg.setdefault("control", {})
    h = ctl.get("horizon")
    if h is not None and h != "auto" and not (isinstance(h, int) and h >= 1):
        raise _schema("control.horizon must be null, a positive integer or \"auto\"")
    cfg.setdefault("seed", 0)
    return cfg


def apply_overrides(cfg: dict, seed=None, lambda1=None, lambda2=None, out=None, env=None) -> dict:
    """Apply CLI flags on top of a config. ``MCSC_SEED`` in ``env`` overrides
    the config seed; an explicit ``seed`` overrides both. A seed override
    also replaces any section-level seed."""
    cfg = copy.deepcopy(cfg)
    env = os.environ if env is None else env
    if seed is None and env.get("MCSC_SEED") not in (None, ""):
        try:
            seed = int(env["MCSC_SEED"])
        except ValueError as exc:
            raise _schema(f"MCSC_SEED must be an integer, got {env['MCSC_SEED']!r}") from exc
    if seed is not None:
        cfg["seed"] = int(seed)
        if "model" in cfg["input"]:
            cfg["input"]["model"]["seed"] = int(seed)
        if "seed" in cfg.get("partition", {}):
            cfg["partition"]["seed"] = int(seed)
    if lambda1 is not None:
        cfg["control"]["lambda1"] = float(lambda1)
    if lambda2 is not None:
        cfg["control"]["lambda2"] = float(lambda2)
    if out is not None:
        cfg.setdefault("outputs", {})["dir"] = str(out)
    return cfg


def _public(cfg):
    # resolved absolute paths would make summaries machine dependent
    def strip(obj):
        if isinstance(obj, dict):
            return {k: strip(v) for k, v in obj.items() if not k.startswith("_")}
        return obj
    doc = strip(cfg)
    doc.pop("outputs", None)
    return doc


# rewards

_OPS = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}


def resolve_reward(spec: dict, centers, n_states: int | None = None) -> np.ndarray:
    """Length-K reward vector from a reward spec.

    ``centers`` holds one coordinate row per state (representatives or cell
    centers); rows of NaN (e.g. a resetting state) match no rule and get
    the default value.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    k = centers.shape[0] if n_states is None else n_states
    if not isinstance(spec, dict) or len(set(spec) & {"values", "targets", "rules"}) != 1:
        raise _schema("reward must give exactly one of values, targets or rules")
    if "values" in spec:
        r = np.asarray(spec["values"], dtype=float)
        if r.shape != (k,):
            raise PipelineError("control", "reward_length", f"reward has {r.size} values for {k} states")
        return r
    if "targets" in spec:
        t = np.asarray(spec["targets"], dtype=np.int64)
        if t.size == 0 or t.min() < 1 or t.max() > k:
            raise PipelineError("control", "reward_targets", f"target states must lie in 1..{k}")
        r = np.full(k, float(spec.get("outside", 0.0)))
        r[t - 1] = float(spec.get("inside", 1.0))
        return r
    r = np.full(k, float(spec.get("default", 0.0)))
    done = np.zeros(k, dtype=bool)
    for rule in spec["rules"]:
        hit = ~done
        for cond in rule.get("when", []):
            axis, op = int(cond["axis"]), cond["op"]
            if op not in _OPS or not 1 <= axis <= centers.shape[1]:
                raise _schema(f"bad reward condition {cond!r}")
            with np.errstate(invalid="ignore"):
                hit &= _OPS[op](centers[:, axis - 1], float(cond["value"]))
        r[hit] = float(rule["value"])
        done |= hit
    return r


# ingestion

def ingest_csv(path, mapping: dict) -> pd.DataFrame:
    """Read longitudinal records into a table ``individual_id, t, x_1..x_N``.

    Rows with missing variable values are dropped and reported per
    variable. Rows with unparsable values (or a missing individual or
    time) count as malformed; more than ``malformed_tolerance`` of them is
    an error, fewer are dropped with a warning. Duplicate
    ``(individual, time)`` pairs are always an error.
    """
    stage = "ingest"
    ind_col, time_col = mapping["individual"], mapping["time"]
    variables = list(mapping["variables"])
    tol = float(mapping.get("malformed_tolerance", 0.0))
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise PipelineError(stage, "unreadable", f"cannot read {path}: {exc}") from exc
    missing_cols = [c for c in [ind_col, time_col, *variables] if c not in raw.columns]
    if missing_cols:
        raise PipelineError(stage, "missing_columns", f"columns not found: {missing_cols}")
    for col in mapping.get("categorical", []):
        warnings.warn(f"column {col!r} is categorical; k-means distances on its numeric codes "
                      "have no natural meaning", DataWarning, stacklevel=2)
    n = len(raw)
    blank = raw.apply(lambda s: s.str.strip().isin(["", "NA", "NaN", "nan"]))
    values = raw[variables].apply(lambda s: pd.to_numeric(s.str.strip(), errors="coerce"))
    times = pd.to_numeric(raw[time_col].str.strip(), errors="coerce")
    miss_var = blank[variables]
    bad_var = values.isna() & ~miss_var
    malformed = (bad_var.any(axis=1) | blank[ind_col] | times.isna()
                 | (times.notna() & (times % 1 != 0)))
    if n and malformed.sum() > tol * n:
        raise PipelineError(stage, "malformed_rows",
                            f"{int(malformed.sum())} of {n} rows are malformed (tolerance {tol:g})")
    if malformed.any():
        warnings.warn(f"dropped {int(malformed.sum())} malformed rows", DataWarning, stacklevel=2)
    incomplete = miss_var.any(axis=1) & ~malformed
    if incomplete.any():
        per_var = {v: int(miss_var.loc[~malformed, v].sum()) for v in variables}
        warnings.warn(f"dropped {int(incomplete.sum())} rows with missing values; missing per "
                      f"variable: {per_var}", DataWarning, stacklevel=2)
    keep = ~(malformed | incomplete)
    table = pd.DataFrame({"individual_id": raw.loc[keep, ind_col].str.strip(),
                          "t": times[keep].astype(np.int64)})
    for d, v in enumerate(variables, start=1):
        table[f"x_{d}"] = values.loc[keep, v].astype(float)
    dup = table.duplicated(["individual_id", "t"], keep=False)
    if dup.any():
        first = table.loc[dup].iloc[0]
        raise PipelineError(stage, "duplicate_key", f"{int(dup.sum())} rows share an (individual, "
                            f"time) pair, e.g. ({first['individual_id']}, {first['t']})")
    if table.empty:
        raise PipelineError(stage, "no_data", "no usable rows left after cleaning")
    return table.sort_values(["individual_id", "t"], kind="stable").reset_index(drop=True)


def _table_to_trajectories(table: pd.DataFrame) -> list:
    xs = [c for c in table.columns if c.startswith("x_")]
    return [Trajectory(ind, g["t"].to_numpy(np.int64), g[xs].to_numpy(float))
            for ind, g in table.groupby("individual_id", sort=True)]


# summary bookkeeping

def _out(cfg) -> Path:
    d = Path(cfg.get("outputs", {}).get("dir", "mcsc-out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_summary(out: Path, cfg) -> dict:
    p = out / F_SUMMARY
    if p.exists():
        doc = io.read_json(p)
    else:
        doc = {"schema_version": io.SCHEMA_VERSION, "stages": [], "state": {}}
    doc["config"] = _public(cfg)
    return doc


def _record(out: Path, summary: dict, stage: str, params: dict, files: list, **state) -> None:
    # a rerun stage invalidates everything recorded after it
    names = [s["stage"] for s in summary["stages"]]
    if stage in names:
        summary["stages"] = summary["stages"][:names.index(stage)]
    summary["stages"].append({"stage": stage, "params": params, "files": sorted(files)})
    summary["state"].update(state)
    io.write_json(out / F_SUMMARY, summary)


def _need(out: Path, name: str, stage: str) -> Path:
    p = out / name
    if not p.exists():
        raise PipelineError(stage, "missing_artifact", f"{name} not found in {out}; run the "
                            "earlier stages first")
    return p


def _source(cfg):
    (src, spec), = cfg["input"].items()
    return src, spec


# stages

def stage_simulate(cfg) -> dict:
    """Simulate the configured model, or ingest the configured CSV."""
    out = _out(cfg)
    summary = _load_summary(out, cfg)
    src, spec = _source(cfg)
    if src == "model":
        kw = {k: v for k, v in spec.items() if k != "name"}
        kw.setdefault("seed", cfg["seed"])
        if "x0" in kw:
            kw["x0"] = tuple(kw["x0"])
        try:
            sim = SimConfig.default(spec["name"], **kw)
        except (TypeError, ValueError) as exc:
            raise PipelineError("simulate", "bad_model", str(exc)) from exc
        trajs = simulate(sim)
        params = {"model": sim.model, "T": sim.T, "dt": sim.dt, "sigma": sim.sigma,
                  "trials": sim.trials, "seed": sim.seed, "x0": list(sim.x0),
                  "params": sim.params, "transient_steps": sim.transient_steps}
        stage = "simulate"
    elif src == "csv":
        table = ingest_csv(spec["_path_resolved"], spec)
        trajs = _table_to_trajectories(table)
        params = {"path": spec["path"], "rows": len(table), "individuals": len(trajs)}
        stage = "ingest"
    else:
        raise PipelineError("simulate", "no_trajectories", "distribution_series input has no "
                            "trajectories to simulate or ingest")
    io.write_trajectories(out / F_TRAJ, trajs)
    _record(out, summary, stage, params, [F_TRAJ])
    return summary


def _partition(cfg, pts) -> Partition:
    p = cfg["partition"]
    seed = p.get("seed", cfg["seed"])
    try:
        if p["kind"] == "per-axis":
            bins = p.get("bins", [20])
            bins = [bins] * pts.shape[1] if isinstance(bins, int) else bins
            return partition_per_axis(pts, bins, p.get("edge_rule", "quantile"), p.get("bounds"))
        if p["kind"] == "kmeans":
            return fit_kmeans(pts, int(p["K"]), seed=seed, max_iter=int(p.get("max_iter", 300)),
                              distance=p.get("distance", "euclidean"))
        return sample_representatives(pts, int(p["K"]), seed=seed,
                                      distance=p.get("distance", "euclidean"))
    except (KeyError, ValueError) as exc:
        raise PipelineError("discretize", "bad_partition", str(exc)) from exc


def stage_discretize(cfg) -> dict:
    """Partition state space and label every observation."""
    out = _out(cfg)
    summary = _load_summary(out, cfg)
    src, spec = _source(cfg)
    if src == "distribution_series":
        series = _read_input_series(spec)
        k = series.n_states
        if spec.get("coordinates") is not None:
            _, rows = io.read_csv(spec["_coordinates_resolved"])
            coords = np.array([[float(v) for v in r] for r in rows])
        else:
            coords = np.arange(1, k + 1, dtype=float)[:, None]
        if coords.shape[0] != k:
            raise PipelineError("discretize", "coordinates_mismatch",
                                f"{coords.shape[0]} coordinate rows for {k} states")
        part = Partition("representatives", representatives=coords)
        io.write_partition(out / F_PART, part)
        _record(out, summary, "discretize", {"kind": "given", "K": k}, [F_PART], n_states=k)
        return summary
    trajs = io.read_trajectories(_need(out, F_TRAJ, "discretize"))
    pts = np.concatenate([tr.points for tr in trajs])
    ind = np.concatenate([np.full(len(tr.times), tr.individual_id, dtype=object) for tr in trajs])
    t = np.concatenate([tr.times for tr in trajs])
    part = _partition(cfg, pts)
    labels = label_series(part, ind, t, pts)
    io.write_partition(out / F_PART, part)
    io.write_labels(out / F_LABELS, labels)
    params = {**cfg["partition"], "K": part.n_states}
    params.setdefault("seed", cfg["seed"])
    _record(out, summary, "discretize", params, [F_PART, F_LABELS], n_states=part.n_states)
    return summary


def _read_input_series(spec):
    try:
        return io.read_series(spec["_path_resolved"])
    except OSError as exc:
        raise PipelineError("discretize", "unreadable", str(exc)) from exc
    except ValueError as exc:
        raise PipelineError("discretize", "bad_series", str(exc)) from exc


def stage_estimate(cfg) -> dict:
    """Estimate the transition matrix and the initial distribution."""
    out = _out(cfg)
    summary = _load_summary(out, cfg)
    src, spec = _source(cfg)
    est = cfg["estimator"]
    eps = float(est.get("epsilon", 1e-10))
    part = io.read_partition(_need(out, F_PART, "estimate"))
    order = []
    files = [F_A, F_ZINIT]
    if src == "distribution_series":
        m = cfg.get("matching", {})
        series = _read_input_series(spec)
        if m.get("grid"):
            g = m["grid"]
            grid = np.linspace(float(g["start"]), float(g["stop"]), int(g["num"]))
        else:
            grid = series.times
        reg = regrid_series(series, grid, int(m.get("smooth_window", 0)))
        D = pairwise_distances(part)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("always")
                A = match_series(reg, D, mismatch_tol=m.get("mismatch_tol", 0.5))
        except (ValueError, RuntimeError) as exc:
            raise PipelineError("estimate", "transport_failed", str(exc)) from exc
        plans = [solve_ot(reg.points[i], reg.points[i + 1], D) for i in range(len(reg) - 1)]
        io.write_series(out / F_SERIES, reg)
        io.write_transport_plan(out / F_PLAN_OT, average_plan(plans))
        files += [F_SERIES, F_PLAN_OT]
        order += ["regrid", "optimal_transport"]
        z0 = reg.points[0]
        n_times = len(reg)
        reset = "off"
    else:
        labels = io.read_labels(_need(out, F_LABELS, "estimate"), part.n_states)
        events = extract_events(labels, bridge_gaps=bool(est.get("bridge_gaps", False)))
        order.append("events")
        reset = est.get("resetting", "off")
        if reset != "off":
            events = apply_resetting(events, labels, dummy=reset == "dummy")
            order.append(f"resetting:{reset}")
        if est.get("method", "relative") == "weighted":
            A = estimate_weighted(events, float(est.get("eta", 1.0)))
        else:
            A = estimate_relative_frequency(events)
        order.append(est.get("method", "relative"))
        if est.get("gamma") is not None:
            D = pairwise_distances(part)
            if reset == "dummy":
                D = np.pad(D, ((0, 1), (0, 1)), constant_values=np.inf)
                D[-1, -1] = 0.0
            A = smooth_kernel(A, D, float(est["gamma"]))
            order.append("smoothing")
        io.write_events(out / F_EVENTS, events)
        files.append(F_EVENTS)
        t0 = labels.times.min()
        first = labels.labels[labels.times == t0]
        z0 = np.bincount(first - 1, minlength=A.shape[0]).astype(float)
        z0 /= z0.sum()
        n_times = int(labels.times.max() - t0 + 1)
    if eps > 0:
        A = apply_damping(A, eps)
        order.append("damping")
    io.write_matrix(out / F_A, A)
    io.write_distribution(out / F_ZINIT, z0)
    params = {"method": "ot" if src == "distribution_series" else est.get("method", "relative"),
              "eta": est.get("eta", 1.0), "gamma": est.get("gamma"), "epsilon": eps,
              "resetting": reset, "order": order}
    _record(out, summary, "estimate", params, files, n_chain_states=A.shape[0], n_times=n_times,
            reset=reset)
    return summary


def _control_config(cfg, summary, z0) -> ControlConfig:
    c = cfg["control"]
    horizon = c.get("horizon")
    if horizon == "auto":
        horizon = summary["state"]["n_times"]
    try:
        return ControlConfig(
            lambda1=float(c.get("lambda1", 0.1)), lambda2=float(c.get("lambda2", 0.1)),
            H=tuple(c.get("H", (0.5, 0.8, 0.9))),
            candidate_fraction=float(c.get("candidate_fraction", 0.2)),
            horizon=horizon, z_init=z0 if horizon is not None else None,
            probe_suppression=float(c.get("probe_suppression", 0.1)),
            ranking=c.get("ranking", "value"),
            count_compensation=bool(c.get("count_compensation", True)),
            repeat_sites=bool(c.get("repeat_sites", True)),
        )
    except ValueError as exc:
        raise PipelineError("control", "bad_control", str(exc)) from exc


def _chain_centers(part: Partition, k: int) -> np.ndarray:
    c = np.asarray(part.centers(), dtype=float)
    if k > c.shape[0]:  # resetting state has no location
        c = np.vstack([c, np.full((k - c.shape[0], c.shape[1]), np.nan)])
    return c


def stage_control(cfg) -> dict:
    """Greedy sparse suppression design on the estimated chain."""
    out = _out(cfg)
    summary = _load_summary(out, cfg)
    A = io.read_matrix(_need(out, F_A, "control"))
    z0 = io.read_distribution(_need(out, F_ZINIT, "control"))
    part = io.read_partition(_need(out, F_PART, "control"))
    k = A.shape[0]
    if "reward" not in cfg["control"]:
        raise _schema("control.reward is required")
    r = resolve_reward(cfg["control"]["reward"], _chain_centers(part, k), k)
    ccfg = _control_config(cfg, summary, z0)
    try:
        plan = greedy_optimize(A, r, ccfg)
    except NonErgodicError as exc:
        raise PipelineError("control", "non_ergodic", f"{exc}; use damping (epsilon > 0)") from exc
    except (InfeasibleControlError, ValueError) as exc:
        raise PipelineError("control", "infeasible", str(exc)) from exc
    io.write_control_plan(out / F_CPLAN, plan)
    io.write_matrix(out / F_APRIME, plan.A_prime)
    io.write_matrix(out / F_ACTRL, plan.controlled)
    doc = io.control_summary(plan, ccfg)
    doc["reward"] = r
    io.write_json(out / F_CJSON, doc)
    params = {k_: v for k_, v in cfg["control"].items() if k_ != "reward"}
    params.update(horizon=ccfg.horizon, n_interventions=plan.n_interventions,
                  iterations=len(plan.steps), G_final=plan.objective_trace[-1])
    _record(out, summary, "control", params, [F_CPLAN, F_APRIME, F_ACTRL, F_CJSON],
            horizon=ccfg.horizon)
    return summary


def stage_evolve(cfg) -> dict:
    """Distribution dynamics and stationary points with and without control."""
    out = _out(cfg)
    summary = _load_summary(out, cfg)
    A = io.read_matrix(_need(out, F_A, "evolve"))
    z0 = io.read_distribution(_need(out, F_ZINIT, "evolve"))
    ctrl = out / F_ACTRL
    E = io.read_matrix(ctrl) if ctrl.exists() else A
    steps = cfg.get("simulation", {}).get("steps")
    if steps is None:
        horizon = summary["state"].get("horizon")
        steps = (horizon if horizon else summary["state"].get("n_times", 100)) - 1
    steps = max(int(steps), 0)
    io.write_series(out / F_EVO_U, evolve(A, z0, steps))
    io.write_series(out / F_EVO_C, evolve(E, z0, steps))
    files = [F_EVO_U, F_EVO_C]
    try:
        io.write_distribution(out / F_STAT_U, stationary(A))
        io.write_distribution(out / F_STAT_C, stationary(E))
        files += [F_STAT_U, F_STAT_C]
        ergodic = True
    except NonErgodicError:
        warnings.warn("chain is not ergodic; stationary distributions skipped", DataWarning,
                      stacklevel=2)
        ergodic = False
    _record(out, summary, "evolve", {"steps": steps, "ergodic": ergodic}, files)
    return summary


def emit_report(out_dir) -> dict:
    """Plot-ready long-format tables derived from a finished run.

    ``report_distributions.csv``: per state, its coordinates and the
    empirical, predicted and controlled probabilities. Predictions are
    stationary distributions, or the distribution at the horizon when the
    control used a finite horizon (the empirical column then shows the last
    observed time).
    ``report_interventions.csv``: one arrow per suppressed transition.
    ``report_groups.csv``: per time point and state, empirical versus
    predicted and controlled probabilities.
    """
    out = Path(out_dir)
    summary = io.read_json(_need(out, F_SUMMARY, "report"))
    part = io.read_partition(_need(out, F_PART, "report"))
    evo_u = io.read_series(_need(out, F_EVO_U, "report"))
    evo_c = io.read_series(_need(out, F_EVO_C, "report"))
    k = evo_u.n_states
    centers = _chain_centers(part, k)
    horizon = summary["state"].get("horizon")

    # empirical distribution per time point
    if (out / F_LABELS).exists():
        labels = io.read_labels(out / F_LABELS, part.n_states)
        t0 = labels.times.min()
        times = np.unique(labels.times)
        emp = np.stack([np.bincount(labels.labels[labels.times == t] - 1, minlength=k)
                        for t in times]).astype(float)
        emp /= emp.sum(axis=1, keepdims=True)
        overall = np.bincount(labels.labels - 1, minlength=k).astype(float)
        overall /= overall.sum()
        steps = times - t0
    else:
        series = io.read_series(_need(out, F_SERIES, "report"))
        times, emp = series.times, series.points
        overall = emp.mean(axis=0)
        steps = np.arange(len(times))

    if horizon:
        idx = min(int(horizon) - 1, len(evo_u) - 1)
        pred, ctl = evo_u.points[idx], evo_c.points[idx]
        empirical = emp[-1]
    else:
        pred = io.read_distribution(_need(out, F_STAT_U, "report"))
        ctl = io.read_distribution(_need(out, F_STAT_C, "report"))
        empirical = overall

    def coords(i):
        return ["" if not np.isfinite(v) else float(v) for v in centers[i]]

    ndim = centers.shape[1]
    xs = [f"x_{d}" for d in range(1, ndim + 1)]
    io.write_csv(out / F_REP_DIST, ["state", *xs, "empirical", "predicted", "controlled"],
                 ([i + 1, *coords(i), empirical[i], pred[i], ctl[i]] for i in range(k)))

    arrows = []
    if (out / F_CPLAN).exists():
        _, rows = io.read_csv(out / F_CPLAN)
        for row in rows:
            i, j = int(row[0]), int(row[1])
            arrows.append([i, j, *coords(i - 1), *coords(j - 1), float(row[2]), float(row[3]),
                           float(row[4])])
    io.write_csv(out / F_REP_ARROWS,
                 ["from_state", "to_state", *[f"from_{x}" for x in xs], *[f"to_{x}" for x in xs],
                  "original_prob", "controlled_prob", "cumulative_suppression"], arrows)

    def group_rows():
        for g, s in enumerate(steps):
            if s >= len(evo_u):
                break
            for i in range(k):
                yield [times[g], i + 1, emp[g, i], evo_u.points[s, i], evo_c.points[s, i]]

    io.write_csv(out / F_REP_GROUPS, ["time", "state", "empirical", "predicted", "controlled"],
                 group_rows())
    return summary


def stage_report(cfg) -> dict:
    out = _out(cfg)
    summary = _load_summary(out, cfg)
    emit_report(out)
    _record(out, summary, "report", {}, [F_REP_DIST, F_REP_ARROWS, F_REP_GROUPS])
    return summary


_RUNNERS = {"simulate": stage_simulate, "discretize": stage_discretize,
            "estimate": stage_estimate, "control": stage_control, "evolve": stage_evolve,
            "report": stage_report}


def run_stage(name: str, cfg: dict) -> dict:
    if name not in _RUNNERS:
        raise _schema(f"unknown stage {name!r}")
    try:
        return _RUNNERS[name](cfg)
    except PipelineError:
        raise
    except NonErgodicError as exc:
        raise PipelineError(name, "non_ergodic", str(exc)) from exc
    except OSError as exc:
        raise PipelineError(name, "io", str(exc)) from exc
    except ValueError as exc:
        raise PipelineError(name, "invalid", str(exc)) from exc


def run_pipeline(config) -> dict:
    """Run every applicable stage in order and return the run summary."""
    cfg = load_config(config)
    out = _out(cfg)
    for name in _ARTIFACTS:
        (out / name).unlink(missing_ok=True)
    src, _ = _source(cfg)
    summary = None
    for name in STAGES:
        if name == "simulate" and src == "distribution_series":
            continue
        if name == "control" and "reward" not in cfg.get("control", {}):
            continue
        summary = run_stage(name, cfg)
    return summary
