# %% [markdown]
# # One-dimensional double well: sparse control as lambda shrinks
#
# A particle hops between two wells at x = -1 and x = +1. We coarse-grain a
# long trajectory into 20 quantile bins, estimate the transition matrix and
# ask the greedy controller to keep mass in the left well. Smaller
# penalties buy more interventions, and every one of them sits near the
# barrier.

# %%
import numpy as np

from mcsc.chain import apply_damping, estimate_relative_frequency, extract_events, stationary
from mcsc.control import ControlConfig, greedy_optimize
from mcsc.geometry import label_series, partition_per_axis
from mcsc.models import SimConfig, simulate_dw1

tr = simulate_dw1(SimConfig.default("dw1", seed=0))
part = partition_per_axis(tr.points, [20], edge_rule="quantile")
labels = label_series(part, np.zeros(len(tr.times)), tr.times, tr.points)
A = apply_damping(estimate_relative_frequency(extract_events(labels)), 1e-10)

# %% [markdown]
# The stationary distribution of the estimated chain should reproduce the
# occupancy histogram of the trajectory.

# %%
z = stationary(A)
print("L1(histogram, stationary) =", round(float(np.abs(z - labels.histogram()).sum()), 4))

# %% [markdown]
# States 1-10 are the left well. Reward +1 there and -1 on the right.

# %%
r = np.where(np.arange(20) < 10, 1.0, -1.0)
centers = part.centers()[:, 0]
print(f"uncontrolled left mass: {z[:10].sum():.3f}")
for lam in (0.1, 0.05, 0.01, 0.002):
    plan = greedy_optimize(A, r, ControlConfig(lam, lam))
    sites = ", ".join(f"{i}->{j} (x={centers[i - 1]:+.2f}, suppressed {c:.0%})"
                      for i, j, c in plan.interventions)
    print(f"lambda={lam:<6} interventions={plan.n_interventions} "
          f"left mass={stationary(plan.controlled)[:10].sum():.3f}  [{sites}]")

# %% [markdown]
# Optional figure when matplotlib is installed (`pip install .[demos]`).

# %%
try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    plan = greedy_optimize(A, r, ControlConfig(0.01, 0.01))
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(centers, z, "o-", label="uncontrolled")
    ax.plot(centers, stationary(plan.controlled), "s-", label="controlled")
    ax.set_xlabel("x")
    ax.set_ylabel("stationary mass")
    ax.legend()
    fig.tight_layout()
    fig.savefig("dw1_stationary.png", dpi=120)
    print("wrote dw1_stationary.png")
