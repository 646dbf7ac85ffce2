"""Adaptive private next-token decoding with data-dependent Renyi-DP accounting."""
from .accountant import (
    BaselineConfig,
    PrivacyLedger,
    data_dependent_loss,
    data_independent_bound,
    rdp_to_dp,
    select_beta,
    subsampled_loss,
    utility_gap_bound,
)
from .decoder import DecodingConfig, QueryOutcome, decode_adaptive, decode_baseline, sample_token
from .divergence import renyi_divergence, renyi_divergence_sym
from .projection import ProjectionResult, project
from .screening import ScreeningConfig, ScreeningVerdict, screen, screening_eps

__version__ = "0.1.0"
