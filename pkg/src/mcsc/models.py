"""Benchmark dynamical systems and their integrators.

Stochastic models (1-D and 2-D double wells, branching flow) use the
Euler-Maruyama scheme ``x + f(x) dt + sigma sqrt(dt) xi``; the Lorenz and
Rossler attractors use classical fourth-order Runge-Kutta. Trajectories
contain ``T`` points including the initial condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "SimConfig",
    "Trajectory",
    "DEFAULTS",
    "euler_maruyama",
    "rk4",
    "dw1_drift",
    "dw2_drift",
    "branching_memberships",
    "branching_drift",
    "lorenz",
    "rossler",
    "simulate_dw1",
    "simulate_dw2",
    "simulate_branching",
    "simulate_attractor",
    "simulate",
]

DEFAULTS = {
    "dw1": dict(T=10_000, dt=0.01, sigma=1.0, x0=(0.0,)),
    "dw2": dict(T=10_000, dt=0.05, sigma=1.0, x0=(0.0, 0.0)),
    "branching": dict(T=100, dt=0.001, sigma=0.8, trials=100, x0=(0.5, 1.0)),
    "lorenz": dict(T=20_000, dt=0.01, sigma=0.0, x0=(1.0, 1.0, 1.0), transient_steps=1000,
                   params={"rho": 28.0, "sigma": 10.0, "beta": 8.0 / 3.0}),
    "rossler": dict(T=20_000, dt=0.01, sigma=0.0, x0=(1.0, 1.0, 1.0), transient_steps=1000,
                    params={"a": 0.1, "b": 0.1, "c": 14.0}),
}


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings; build with :meth:`default` to get per-model defaults.

    ``sigma`` is the noise intensity. Model constants (``theta`` for the
    branching flow, ``rho``/``sigma``/``beta`` for Lorenz, ``a``/``b``/``c``
    for Rossler) live in ``params``.
    """

    model: str
    T: int
    dt: float
    sigma: float = 0.0
    trials: int = 1
    seed: int = 0
    x0: tuple = ()
    params: dict = field(default_factory=dict)
    transient_steps: int = 0

    def __post_init__(self):
        if self.model not in DEFAULTS:
            raise ValueError(f"unknown model {self.model!r}")
        if not self.dt > 0 or self.T < 2 or self.sigma < 0 or self.trials < 1:
            raise ValueError("need dt > 0, T >= 2, sigma >= 0 and trials >= 1")

    @classmethod
    def default(cls, model: str, **overrides) -> "SimConfig":
        if model not in DEFAULTS:
            raise ValueError(f"unknown model {model!r}")
        kw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULTS[model].items()}
        params = {**kw.pop("params", {}), **overrides.pop("params", {})}
        kw.update(overrides)
        return cls(model=model, params=params, **kw)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class Trajectory:
    individual_id: object
    times: np.ndarray
    points: np.ndarray

    @property
    def n_dims(self) -> int:
        return self.points.shape[1]


def euler_maruyama(drift, x0, dt, n_steps, noise, rng) -> np.ndarray:
    """Integrate ``dx = drift(x) dt + diag(noise) dW``; returns ``n_steps + 1`` points."""
    x = np.array(x0, dtype=float)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), x.shape)
    kicks = rng.standard_normal((n_steps, x.size)) * (noise * np.sqrt(dt))
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    for t in range(n_steps):
        x = x + drift(x) * dt + kicks[t]
        out[t + 1] = x
    return out


def rk4(f, x0, dt, n_steps) -> np.ndarray:
    """Classical Runge-Kutta integration; returns ``n_steps + 1`` points."""
    x = np.array(x0, dtype=float)
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    for t in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        out[t + 1] = x
    return out


def dw1_drift(x):
    return -4.0 * x**3 + 4.0 * x


def dw2_drift(v):
    x, y = v[0], v[1]
    s3 = (x + y) ** 3
    return np.array([-s3 - 2.0 * x + 6.0 * y, -s3 - 2.0 * y + 6.0 * x])


def branching_memberships(y):
    """Fuzzy memberships ``(h1, h2, h3)`` of the branching landscape; they sum to one on [0, 1]."""
    y = np.asarray(y, dtype=float)
    return np.maximum(2 * y - 1, 0.0), 1.0 - np.abs(2 * y - 1), np.maximum(1 - 2 * y, 0.0)


def branching_drift(v, theta):
    x, y = v[0], v[1]
    h1, h2, h3 = branching_memberships(y)
    fx = (h1 * 2 * np.pi * np.sin(2 * np.pi * x) + h2 * 4 * np.pi * np.sin(4 * np.pi * x)
          + h3 * 8 * np.pi * np.sin(8 * np.pi * x))
    return np.array([fx, -theta])


def lorenz(rho=28.0, sigma=10.0, beta=8.0 / 3.0):
    def f(v):
        x, y, z = v
        return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])
    return f


def rossler(a=0.1, b=0.1, c=14.0):
    def f(v):
        x, y, z = v
        return np.array([-y - z, x + a * y, b + z * (x - c)])
    return f


def _rng(config: SimConfig, trial: int):
    # one stream per (seed, trial) so trials can run in any order
    return np.random.default_rng([config.seed, trial])


def _times(T):
    return np.arange(T, dtype=np.int64)


def simulate_dw1(config: SimConfig, trial: int = 0) -> Trajectory:
    x0 = config.x0 or (0.0,)
    pts = euler_maruyama(dw1_drift, x0, config.dt, config.T - 1, config.sigma, _rng(config, trial))
    return Trajectory(trial, _times(config.T), pts)


def simulate_dw2(config: SimConfig, trial: int = 0) -> Trajectory:
    x0 = config.x0 or (0.0, 0.0)
    pts = euler_maruyama(dw2_drift, x0, config.dt, config.T - 1, config.sigma, _rng(config, trial))
    return Trajectory(trial, _times(config.T), pts)


def simulate_branching(config: SimConfig) -> list:
    """``config.trials`` trajectories from (0.5, 1); noise acts on x only."""
    theta = config.params.get("theta", 1.0 / ((config.T - 1) * config.dt))
    x0 = config.x0 or (0.5, 1.0)
    out = []
    for m in range(config.trials):
        pts = euler_maruyama(lambda v: branching_drift(v, theta), x0, config.dt, config.T - 1,
                             (config.sigma, 0.0), _rng(config, m))
        out.append(Trajectory(m, _times(config.T), pts))
    return out


def simulate_attractor(config: SimConfig) -> Trajectory:
    """Lorenz or Rossler orbit with the first ``transient_steps`` points dropped."""
    if config.model == "lorenz":
        f = lorenz(**config.params)
    elif config.model == "rossler":
        f = rossler(**config.params)
    else:
        raise ValueError(f"{config.model!r} is not an attractor model")
    x0 = config.x0 or (1.0, 1.0, 1.0)
    pts = rk4(f, x0, config.dt, config.transient_steps + config.T - 1)
    return Trajectory(0, _times(config.T), pts[config.transient_steps:])


def simulate(config: SimConfig) -> list:
    """Dispatch on ``config.model``; always returns a list of trajectories."""
    if config.model == "dw1":
        return [simulate_dw1(config, m) for m in range(config.trials)]
    if config.model == "dw2":
        return [simulate_dw2(config, m) for m in range(config.trials)]
    if config.model == "branching":
        return simulate_branching(config)
    return [simulate_attractor(config)]
