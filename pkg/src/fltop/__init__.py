"""fltop: bandwidth-efficient, differentially private federated learning by
fixed top-k weight pruning, with a moments-accountant privacy calculator,
additive-mask secure aggregation, and exact bandwidth accounting."""

from .federation import (SCHEMES, FederationConfig, RoundMetrics, SchemeSpec,
                         Seeds, bandwidth_cost, run_experiment)
from .privacy import AccountantQuery, epsilon, log_moment

__all__ = [
    "SCHEMES", "FederationConfig", "RoundMetrics", "SchemeSpec", "Seeds",
    "bandwidth_cost", "run_experiment", "AccountantQuery", "epsilon",
    "log_moment",
]

__version__ = "0.1.0"
