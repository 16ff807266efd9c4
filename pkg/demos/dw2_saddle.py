# %% [markdown]
# # Two-dimensional quadruple well: the controller finds the saddle
#
# Four wells sit at (+-1, +-1). We reward the bottom-left well, penalize the
# top-right one and compare a regular 10 x 10 grid with a 50-cluster
# k-means partition. The chosen interventions should sit near the origin,
# where the wells connect.

# %%
import numpy as np

from mcsc.chain import apply_damping, estimate_relative_frequency, extract_events, stationary
from mcsc.control import ControlConfig, greedy_optimize
from mcsc.geometry import fit_kmeans, label_series, partition_per_axis
from mcsc.models import SimConfig, simulate_dw2

tr = simulate_dw2(SimConfig.default("dw2", seed=0))


def quadrant_reward(c):
    x, y = c[:, 0], c[:, 1]
    return np.where((x < 0) & (y < 0), 1.0, np.where((x >= 0) & (y >= 0), -1.0, 0.0))


# %%
for name, part in (("grid 10x10", partition_per_axis(tr.points, [10, 10])),
                   ("kmeans 50", fit_kmeans(tr.points, 50, seed=0))):
    labels = label_series(part, np.zeros(len(tr.times)), tr.times, tr.points)
    A = apply_damping(estimate_relative_frequency(extract_events(labels)), 1e-10)
    c = part.centers()
    plan = greedy_optimize(A, quadrant_reward(c), ControlConfig(0.005, 0.005))
    dist = [np.hypot(*c[i - 1]) for i, _, _ in plan.interventions]
    tr_mask = (c[:, 0] >= 0) & (c[:, 1] >= 0)
    print(f"{name}: {plan.n_interventions} interventions, median source distance to origin "
          f"{np.median(dist):.2f}, top-right mass {stationary(A)[tr_mask].sum():.3f} -> "
          f"{stationary(plan.controlled)[tr_mask].sum():.3f}")
