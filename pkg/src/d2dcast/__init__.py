"""Device-to-device aided multicast: two-slot scheme simulation and analysis."""

from .analytic import (
    BetaThresholds,
    approx_failure_prob,
    asymptotic_outage_prob,
    baseline_multicast_rate,
    baseline_outage_rate,
    beta_thresholds,
    outage_snr_taylor,
    phase_limit_mean_success,
)
from .experiments import ExperimentConfig, ResultRow, run_scenario, write_results
from .mc_engine import SimEstimate, simulate_baseline, simulate_collapsed, simulate_full
from .solvers import SchemeEval, maximize_effective_rate, solve_outage_snr_asymptotic, solve_outage_snr_mc
from .topology import (
    ClassModel,
    GainMatrix,
    PathlossParams,
    block_gain_matrix,
    db_to_linear,
    geometric_gain_matrix,
    validate_two_hop,
)

__version__ = "0.1.0"
