"""Fairness-constrained Bayesian mixture clustering with an unknown
number of clusters."""

from .core import (Assignment, GroupedDataset, MatchingState,
                   MatchingViolation, Partition, assignments_from, balance,
                   delta_fairness, validate_matching)
from .dataio import (DatasetSpec, generate_toy, load_chain, load_csv,
                     load_dataset, save_chain)
from .metrics import (autocorrelation, categorical_cost, cost,
                      linear_assignment, posterior_mode_k, summarize_chain,
                      test_nll)
from .priors import (BetaBernoulliFamily, NormalGammaFamily, PriorConfig,
                     VCoefficients, compute_log_v, energy,
                     log_partition_prior)
from .sampler import (ChainSample, FbcRun, SamplerConfig, init_state,
                      run_fbc, select_R)

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "GroupedDataset",
    "MatchingState",
    "MatchingViolation",
    "Partition",
    "assignments_from",
    "balance",
    "delta_fairness",
    "validate_matching",
    "DatasetSpec",
    "generate_toy",
    "load_chain",
    "load_csv",
    "load_dataset",
    "save_chain",
    "autocorrelation",
    "categorical_cost",
    "cost",
    "linear_assignment",
    "posterior_mode_k",
    "summarize_chain",
    "test_nll",
    "BetaBernoulliFamily",
    "NormalGammaFamily",
    "PriorConfig",
    "VCoefficients",
    "compute_log_v",
    "energy",
    "log_partition_prior",
    "ChainSample",
    "FbcRun",
    "SamplerConfig",
    "init_state",
    "run_fbc",
    "select_R",
    "__version__",
]
