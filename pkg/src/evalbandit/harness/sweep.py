"""Oracle suboptimality gap as a function of the number of evaluators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import EvaluatorModel, LinkFunction, LinkKind, NoiseKind, RewardDistribution, Truncation, \
    generate_evaluations
from ..oracle import Setting, compute_oracle_weights, top_k
from .runner import PARAMS_STREAM, ENV_STREAM, stream

DEFAULT_J_VALUES = (1, 2, 4, 8, 16, 32, 64, 128)


@dataclass(frozen=True)
class GapRow:
    setting: str
    J: int
    oracle_gap: float
    oracle_gap_sem: float
    average_gap: float
    average_gap_sem: float


def _setting_model(setting: Setting, alpha, sigma, truncation) -> EvaluatorModel:
    if setting is Setting.GLM:
        return EvaluatorModel(alpha, sigma, LinkFunction(LinkKind.LOGISTIC), NoiseKind.TRUNCATED_GAUSSIAN,
                              truncation)
    return EvaluatorModel(alpha, sigma, LinkFunction(LinkKind.IDENTITY), NoiseKind.GAUSSIAN)


def _round_gaps(rewards, scores, K):
    """Per-round true-reward shortfall of ``top_k(scores)`` against the best K."""
    rows = np.arange(rewards.shape[0])[:, None]
    chosen = rewards[rows, top_k(scores, K)].sum(axis=1)
    best = -np.sort(-rewards, axis=1)[:, :K].sum(axis=1)
    return best - chosen


def sweep_oracle_gap(J_values=DEFAULT_J_VALUES, alpha0: float = 1.0, sigma0: float = 1.0,
                     settings=(Setting.LINEAR, Setting.GLM), num_rounds: int = 500, num_runs: int = 40,
                     K: int = 1, K_max: int = 20, reward: RewardDistribution | None = None, seed: int = 0,
                     truncation: Truncation | str = Truncation.RANGE) -> list[GapRow]:
    """Mean per-round gap of the oracle and of the raw evaluation average.

    Each run draws ``alpha ~ U[alpha0/2, 3 alpha0/2]`` and
    ``sigma ~ U[sigma0/2, 3 sigma0/2]`` per evaluator. The spread reported
    next to each mean is the standard error over runs.
    """
    reward = reward or RewardDistribution.truncated_gaussian()
    out = []
    for setting in settings:
        setting = Setting(setting)
        # index the streams by setting as well so the two settings are independent
        tag = 0 if setting is Setting.GLM else 1
        for J in J_values:
            oracle_means, avg_means = [], []
            for run in range(num_runs):
                p_rng = stream(seed, run, PARAMS_STREAM, 1000 * tag + J)
                alpha = p_rng.uniform(alpha0 / 2, 3 * alpha0 / 2, size=J)
                sigma = p_rng.uniform(sigma0 / 2, 3 * sigma0 / 2, size=J)
                model = _setting_model(setting, alpha, sigma, truncation)
                e_rng = stream(seed, run, ENV_STREAM, 1000 * tag + J)
                rewards = reward.sample((num_rounds, K_max), e_rng)
                phi = generate_evaluations(rewards, model, e_rng, support_bound=reward.support_bound)
                w = compute_oracle_weights(alpha, sigma, setting).w
                oracle_scores = model.link.inverse(phi) @ w
                oracle_means.append(_round_gaps(rewards, oracle_scores, K).mean())
                avg_means.append(_round_gaps(rewards, phi.mean(axis=2), K).mean())
            out.append(GapRow(setting.value, int(J), float(np.mean(oracle_means)), _sem(oracle_means),
                              float(np.mean(avg_means)), _sem(avg_means)))
    return out


def _sem(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(values.size))


def gap_table_csv(rows: list[GapRow]) -> str:
    lines = ["setting,J,oracle_gap,oracle_gap_sem,average_gap,average_gap_sem"]
    for r in rows:
        lines.append(",".join([r.setting, str(r.J)] + [format(v, ".12g") for v in
                                                       (r.oracle_gap, r.oracle_gap_sem, r.average_gap,
                                                        r.average_gap_sem)]))
    return "\n".join(lines) + "\n"
