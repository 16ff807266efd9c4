# %% [markdown]
# # Chaotic attractors: biasing which wing the trajectory visits
#
# A Lorenz trajectory is clustered into 50 states. Rewarding the right wing
# (x >= 0) lets the controller cut the transitions that carry mass across
# to the left wing. The same recipe is applied to the Rossler system.

# %%
import numpy as np

from mcsc.chain import apply_damping, estimate_relative_frequency, extract_events, stationary
from mcsc.control import ControlConfig, greedy_optimize
from mcsc.geometry import fit_kmeans, label_series
from mcsc.models import SimConfig, simulate_attractor


def controlled_wing(model, lam):
    tr = simulate_attractor(SimConfig.default(model))
    part = fit_kmeans(tr.points, 50, seed=0)
    labels = label_series(part, np.zeros(len(tr.times)), tr.times, tr.points)
    A = apply_damping(estimate_relative_frequency(extract_events(labels)), 1e-10)
    c = part.centers()
    right = c[:, 0] >= 0
    plan = greedy_optimize(A, right.astype(float), ControlConfig(lam, lam, H=(0.5,)))
    print(f"{model}: {plan.n_interventions} interventions, x >= 0 mass "
          f"{stationary(A)[right].sum():.3f} -> {stationary(plan.controlled)[right].sum():.3f}")
    for i, j, cum in plan.interventions:
        print(f"    {i:>2} -> {j:<2} source x={c[i - 1, 0]:+6.2f}  target x={c[j - 1, 0]:+6.2f}"
              f"  suppressed {cum:.0%}")


# %%
controlled_wing("lorenz", 0.01)
controlled_wing("rossler", 0.002)
