"""Joint CFO, SFO, timing and channel estimation for MIMO-OFDM training blocks.

Modules
-------
numerics
    Kronecker / Hadamard helpers, condition-checked pseudo-inverse and projections.
model
    System configuration, impairments, structured model matrices, signal synthesis.
crlb
    Closed-form Fisher information and Cramér-Rao bounds.
estimators
    Grid-search ML, MML and SML estimators with subspace caching.
harness
    Monte-Carlo SNR sweeps, MSE / timing-failure statistics, CRLB tables.
config
    TOML plan files and binary received-vector files.
"""

from .crlb import CrlbReport, SingularFim, crlb_averaged, fim_wc, fim_woc
from .estimators import (
    EstimationResult,
    GridSpec,
    SearchCache,
    estimate,
    ml_estimate,
    mml_estimate,
    sml_estimate,
)
from .harness import ExperimentPlan, TrialReport, coupling_study, mse, run_experiment
from .model import (
    ChannelProfile,
    ChannelState,
    Impairments,
    SystemConfig,
    TrainingMatrix,
    generate_channel,
    generate_training,
    synthesize,
)
from .numerics import RankDeficient

__version__ = "0.1.0"

__all__ = [
    "ChannelProfile", "ChannelState", "CrlbReport", "EstimationResult", "ExperimentPlan",
    "GridSpec", "Impairments", "RankDeficient", "SearchCache", "SingularFim",
    "SystemConfig", "TrainingMatrix", "TrialReport", "coupling_study", "crlb_averaged",
    "estimate", "fim_wc", "fim_woc", "generate_channel", "generate_training",
    "ml_estimate", "mml_estimate", "mse", "run_experiment", "sml_estimate", "synthesize",
]
