# %% [markdown]
# # Branching dynamics: steering a population to one of four fates
#
# Many short trajectories start near the top of the unit square and branch
# twice on their way down, ending near x = 1/8, 3/8, 5/8 or 7/8. With a
# finite horizon and the observed initial distribution, the controller
# picks a target fate and suppresses transitions around the branch points
# (heights 0.75 and 0.25).

# %%
import numpy as np

from mcsc.chain import apply_damping, estimate_relative_frequency, evolve, extract_events
from mcsc.control import ControlConfig, greedy_optimize
from mcsc.geometry import fit_kmeans, label_series
from mcsc.models import SimConfig, simulate_branching

cfg = SimConfig.default("branching", seed=0)
trs = simulate_branching(cfg)
pts = np.concatenate([t.points for t in trs])
part = fit_kmeans(pts, 80, seed=0)
labels = label_series(part, np.concatenate([np.full(len(t.times), t.individual_id) for t in trs]),
                      np.concatenate([t.times for t in trs]), pts)
A = apply_damping(estimate_relative_frequency(extract_events(labels)), 1e-10)
c = part.centers()

# %% [markdown]
# Initial distribution and terminal regions come straight from the data.

# %%
z1 = np.bincount(labels.labels[labels.times == 0] - 1, minlength=80) / (labels.times == 0).sum()
terminal = np.unique(labels.labels[labels.times == cfg.T - 1]) - 1
fates = np.array([1, 3, 5, 7]) / 8
fate_of = np.abs(c[terminal, 0][:, None] - fates).argmin(axis=1)

# %%
for k, x in enumerate(fates):
    region = terminal[fate_of == k]
    r = np.zeros(80)
    r[terminal] = -1.0
    r[region] = 1.0
    plan = greedy_optimize(A, r, ControlConfig(0.0005, 0.0005, horizon=cfg.T, z_init=z1))
    before = evolve(A, z1, cfg.T - 1).points[-1][region].sum()
    after = evolve(plan.controlled, z1, cfg.T - 1).points[-1][region].sum()
    y = np.array([c[i - 1, 1] for i, _, _ in plan.interventions])
    near_branch = np.mean((np.abs(y - 0.75) <= 0.2) | (np.abs(y - 0.25) <= 0.2))
    print(f"target x={x}: P(fate) {before:.2f} -> {after:.2f} with {plan.n_interventions} "
          f"interventions, {near_branch:.0%} of them within 0.2 of a branch height")
