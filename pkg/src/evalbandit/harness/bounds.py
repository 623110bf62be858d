"""Closed-form bound diagnostics for a configuration."""
from __future__ import annotations

import json
import math

import numpy as np

from ..estimators import link_second_moment
from ..model import sample_num_arms
from ..oracle import GapBoundInputs, Setting, compute_theory_constants, harmonic_mean_arms, oracle_gap_bound
from .config import ExperimentConfig
from .runner import ENV_STREAM, PARAMS_STREAM, draw_parameters, stream


def bounds_report(cfg: ExperimentConfig, run: int = 0) -> dict:
    """Bound constants at the configuration's (α, σ).

    Without explicit vectors the parameters are those drawn for ``run``,
    so the report matches what that run of ``synth`` simulates.
    """
    cfg.validate()
    alpha, sigma = draw_parameters(cfg, stream(cfg.seed, run, PARAMS_STREAM))
    dist = cfg.reward_distribution
    link = cfg.link_function
    C = dist.support_bound
    inputs = GapBoundInputs(cfg.K, cfg.K_max, cfg.J, cfg.delta, alpha, sigma)
    # same first draw as the environment stream, so variable schedules agree with the run
    arms = sample_num_arms(cfg.K, cfg.K_max, cfg.variable_arms, stream(cfg.seed, run, ENV_STREAM),
                           size=cfg.horizon)
    consts = compute_theory_constants(alpha, sigma, cfg.K, cfg.K_max, cfg.J, cfg.delta, C, link)
    T, K = cfg.horizon, cfg.K
    spread = float(np.sum(np.square(sigma)))
    log_term = math.log(2.0 / cfg.delta)
    # optimistic-learner width after T-1 rounds with the expected reward sum
    expected_sum = (T - 1) * K * dist.mean
    beta_T = math.nan
    if expected_sum > 0:
        beta_T = (2 * math.sqrt(2 * cfg.J * log_term) / 3
                  + math.sqrt((T - 1) * K * spread * log_term)) / expected_sum
    return {
        "parameters": {"source": "explicit" if cfg.alpha is not None else f"drawn for run {run}",
                       "alpha": alpha.tolist(), "sigma": sigma.tolist()},
        "setting": cfg.setting,
        "K": cfg.K, "K_max": cfg.K_max, "J": cfg.J, "delta": cfg.delta, "horizon": T,
        "reward": {"support_bound": C, "mean": dist.mean, "second_moment": dist.second_moment},
        "oracle_gap_bound": {"glm": oracle_gap_bound(inputs, Setting.GLM),
                             "linear": oracle_gap_bound(inputs, Setting.LINEAR)},
        "Phi": consts["Phi"],
        "Phi_C": consts["Phi_C"],
        "Phi_prime": consts["Phi_prime"],
        "S": consts["S"],
        "g_sup": consts["g_sup"],
        "eta2_link": [link_second_moment(float(a), dist, link) for a in alpha],
        "harmonic_mean_arms": harmonic_mean_arms(arms),
        "beta_ucb_at_horizon": beta_T,
    }


def print_bounds(cfg: ExperimentConfig, run: int = 0) -> str:
    text = json.dumps(bounds_report(cfg, run), indent=2, sort_keys=True)
    print(text)
    return text
