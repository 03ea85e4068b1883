"""Seedable simulator of a decentralized freight spot market.

A shipper and a carrier learn Gaussian bid/ask strategies by policy
gradients while a neutral broker ships the spread-maximizing feasible job
subset each day. The package provides the market model, the exact knapsack
broker, the learning agents, market-quality metrics, game-theoretic
analysis helpers, and an experiment harness with named presets and a CLI.
"""

from .market import CaseConfig, Job, JobEconomics, MarketState, case_preset
from .broker import Allocation, QuoteSheet, allocate, max_volume_allocation
from .agents import LearningAgent, RiskProfile, ScriptedAgent, bias_presets
from .metrics import JobOutcome, MetricsReport
from .game import BidAskProfile, PayoffMatrix, best_responses, classify_profile, is_nash_point
from .harness import ExperimentConfig, RunResult, preset, run_experiment

__version__ = "0.1.0"

__all__ = [
    "CaseConfig",
    "Job",
    "JobEconomics",
    "MarketState",
    "case_preset",
    "Allocation",
    "QuoteSheet",
    "allocate",
    "max_volume_allocation",
    "LearningAgent",
    "RiskProfile",
    "ScriptedAgent",
    "bias_presets",
    "JobOutcome",
    "MetricsReport",
    "BidAskProfile",
    "PayoffMatrix",
    "best_responses",
    "classify_profile",
    "is_nash_point",
    "ExperimentConfig",
    "RunResult",
    "preset",
    "run_experiment",
    "__version__",
]
