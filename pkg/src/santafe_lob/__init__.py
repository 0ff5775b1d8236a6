"""Zero-intelligence limit order book: event-driven simulation, estimators and mean-field theory."""

from .book import BookState, EventKind, SideEmptied, init_book, step
from .config import ExperimentConfig, load_config
from .estimators import EstimatorSettings, MetricsReport
from .gapchain import ChainClass, gap_chain_iterate, gap_chain_shoot
from .params import DESK, PAPER, ModelParams, SeedSpec, derive_stream_seed, make_rng
from .simulate import run, run_segment
from .theory import (TheoryProfile, diffusion_theory, solve_boltzmann_steady, stationary_profile,
                     theory_metrics)

__version__ = "0.1.0"

__all__ = [
    "BookState", "ChainClass", "DESK", "EstimatorSettings", "EventKind", "ExperimentConfig",
    "MetricsReport", "ModelParams", "PAPER", "SeedSpec", "SideEmptied", "TheoryProfile",
    "derive_stream_seed", "diffusion_theory", "gap_chain_iterate", "gap_chain_shoot", "init_book",
    "load_config", "make_rng", "run", "run_segment", "solve_boltzmann_steady", "stationary_profile",
    "step", "theory_metrics",
]
