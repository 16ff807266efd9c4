"""Markov chain sparse control."""

from .geometry import (LabeledSeries, Partition, partition_per_axis, fit_kmeans,
                       sample_representatives, assign, pairwise_distances, label_series)
from .chain import (EventSet, DistributionSeries, extract_events, apply_resetting,
                    estimate_relative_frequency, estimate_weighted, apply_damping,
                    smooth_kernel, evolve, stationary, reduce)
from .transport import solve_ot, average_plan, plan_to_transition, regrid_series, match_series
from .control import (ControlConfig, ControlPlan, objective, candidate_set,
                      apply_suppression, greedy_optimize, simulate_controlled)
from .models import SimConfig, Trajectory, simulate

__version__ = "0.1.0"
