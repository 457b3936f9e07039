"""Optimal deployment, displacement and load balancing over a flexible set of finite queues."""
from .analysis import (check_build_threshold, check_domination, compute_alpha, count_rejecting_states,
                       long_run_metrics, stationary_distribution)
from .cost_model import ModelParams, delay_rate, effective_rate, holding_rate, load_config
from .experiments import SweepSpec, export_value_surface, run_sweep
from .simulator import CostBreakdown, estimate_value, simulate_once
from .solver import (PolicyTable, bellman_backup, brute_force_solve, extract_policy, policy_evaluation,
                     value_iteration)
from .state_space import QueueClass, StateSpace, active_count, classify, task_total

__version__ = "0.1.0"
