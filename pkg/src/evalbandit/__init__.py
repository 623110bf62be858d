"""Bandits with noisy, biased evaluator scores.

Submodules: :mod:`model` (environment), :mod:`oracle` (closed-form
aggregation), :mod:`estimators`, :mod:`policies`, :mod:`metrics` and the
:mod:`harness` experiment runner and CLI.
"""
__version__ = "0.1.0"

from .model import (DomainError, EvaluatorModel, LinkFunction, LinkKind, NoiseKind, RewardDistribution,
                    RoundObservation, Truncation, generate_evaluations, link_eval, link_inverse,
                    sample_rewards)
from .oracle import (GapBoundInputs, Setting, WeightVector, compute_oracle_weights, compute_theory_constants,
                     estimate_rewards, oracle_gap_bound, suboptimality_gap, top_k)
from .policies import POLICY_NAMES, make_policy

__all__ = [
    "DomainError", "EvaluatorModel", "GapBoundInputs", "LinkFunction", "LinkKind", "NoiseKind",
    "POLICY_NAMES", "RewardDistribution", "RoundObservation", "Setting", "Truncation", "WeightVector",
    "__version__", "compute_oracle_weights", "compute_theory_constants", "estimate_rewards",
    "generate_evaluations", "link_eval", "link_inverse", "make_policy", "oracle_gap_bound",
    "sample_rewards", "suboptimality_gap", "top_k",
]
