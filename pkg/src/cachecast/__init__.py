"""Low-feedback multi-antenna coded caching: placement, delivery schedule,
precoded transmission simulator and converse bounds."""
from .converse import (
    FeasibilityInstance,
    TinyInstance,
    average_over_demands,
    brute_force_min_blocks,
    check_feasible,
    feasibility_max_users,
    lower_bound_delivery,
    packet_order_limit,
)
from .errors import BudgetExceeded, CacheCastError, ConfigError, DecodeFailure
from .model import (
    CacheSubfileId,
    DeliverySubfileId,
    DemandVector,
    SystemConfig,
    UserSet,
    enumerate_subsets,
    validate_config,
)
from .placement import delivery_split, place_receiver_caches, place_transmitter_caches, split_file
from .report import ExperimentSpec, RunReport, emit_plot_data, run_experiment
from .scheduler import build_xor, delivery_metrics, schedule, verify_exactly_once

__version__ = "0.1.0"
