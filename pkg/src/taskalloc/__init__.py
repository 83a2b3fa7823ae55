"""Adaptive task allocation for parallel minibatch SGD, in simulation."""

from .allocation import (
    AllocatorState,
    Policy,
    brute_force_opt,
    choose_allocation,
    conf_ata,
    cumulative_regret,
    k_gap,
    lcb_ata,
    lcb_empirical,
    optimal_allocation,
    proxy_loss,
    ras,
    update_state,
)
from .config import ExperimentConfig, load_config
from .distributions import ArmModel, FleetSpec, make_fleet, sample
from .simulator import RoundRecord, run_experiment, run_greedy_round, run_static_round

__version__ = "0.1.0"
