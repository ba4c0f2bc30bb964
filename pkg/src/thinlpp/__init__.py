"""Last-passage percolation in thin rectangles: simulators, exact oracles and rate functions."""

from __future__ import annotations

from .brownian import BrownianGrid, GueSampleSpec, brownian_passage, sample_brownian_passage, sample_L1k_gue
from .campaign import ExperimentConfig, TailEstimate, estimate_tail, rate_regression, run_campaign, wilson_interval
from .coupling import (
    CouplingGapStats,
    EmbeddingResult,
    coupling_gap_stats,
    embed_partial_sums,
    fuk_nagaev_bound,
    sawyer_tail_check,
    skorokhod_embed_once,
)
from .lattice import passage_time, passage_time_bruteforce, passage_time_variational, sample_passage
from .meixner import MeixnerParams, exact_cdf
from .rates import i_gue, j_gue, minimize_energy
from .weights import ConfigurationError, SeedPath, WeightSpec

__version__ = "0.1.0"
