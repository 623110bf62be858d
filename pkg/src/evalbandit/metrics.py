"""Regret and estimation-error accounting, and cross-run aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .model import LinkFunction
from .oracle import estimate_rewards, top_k

Z_975 = 1.959963984540054


def relative_regret_increment(w_plus, phi, link: LinkFunction, selected, K: int) -> float:
    """Shortfall of ``selected`` against the oracle's top-K, scored by the oracle estimates."""
    selected = np.asarray(selected, dtype=int)
    if selected.size != K:
        raise ValueError("selection size differs from K")
    est = estimate_rewards(w_plus, phi, link)
    best = est[top_k(est, K)].sum()
    return float(best - est[selected].sum())


def absolute_regret_increment(rewards, selected, oracle_selected, K: int) -> float:
    rewards = np.asarray(rewards, dtype=float)
    selected = np.asarray(selected, dtype=int)
    oracle_selected = np.asarray(oracle_selected, dtype=int)
    if selected.size != K or oracle_selected.size != K:
        raise ValueError("selection size differs from K")
    return float(rewards[oracle_selected].sum() - rewards[selected].sum())


def estimation_error(alpha_hat, alpha_ref) -> float:
    return float(np.linalg.norm(np.asarray(alpha_hat, float) - np.asarray(alpha_ref, float)))


def oracle_margin(oracle_scores, K: int) -> float:
    """Score gap between the K-th and (K+1)-th arm under the oracle ranking."""
    s = np.sort(np.asarray(oracle_scores, dtype=float))[::-1]
    if s.size <= K:
        return math.nan
    return float(s[K - 1] - s[K])


@dataclass
class RunTrace:
    """Per-round record of one policy in one run.

    ``selected`` and ``oracle_selected`` are ``(T, K)`` index arrays. The
    cumulative series are prefix sums of the increments.
    """

    policy: str
    run: int
    rel_regret: np.ndarray
    abs_regret: np.ndarray
    gap: np.ndarray
    est_error: np.ndarray
    selected: np.ndarray
    oracle_selected: np.ndarray
    margin: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def horizon(self) -> int:
        return self.rel_regret.size

    @property
    def rel_regret_cum(self) -> np.ndarray:
        return np.cumsum(self.rel_regret)

    @property
    def abs_regret_cum(self) -> np.ndarray:
        return np.cumsum(self.abs_regret)

    @property
    def gap_cum(self) -> np.ndarray:
        return np.cumsum(self.gap)


def score_selections(rewards, oracle_scores, selected, num_arms=None):
    """Vectorized per-round increments over a whole trace.

    ``rewards`` and ``oracle_scores`` are ``(T, K_max)``; entries beyond each
    round's arm count (``num_arms``) are ignored. Returns a dict with
    ``rel``, ``abs``, ``gap``, ``oracle_selected`` and ``margin``.
    """
    rewards = np.asarray(rewards, dtype=float)
    scores = np.array(oracle_scores, dtype=float)
    selected = np.asarray(selected, dtype=int)
    T, width = rewards.shape
    K = selected.shape[1]
    if num_arms is not None:
        pad = np.arange(width)[None, :] >= np.asarray(num_arms)[:, None]
        scores[pad] = -np.inf
        padded_rewards = np.where(pad, -np.inf, rewards)
    else:
        padded_rewards = rewards
    oracle_sel = top_k(scores, K)
    rows = np.arange(T)[:, None]
    sel_scores = scores[rows, selected].sum(axis=1)
    best_scores = scores[rows, oracle_sel].sum(axis=1)
    sel_rewards = rewards[rows, selected].sum(axis=1)
    top_rewards = -np.sort(-padded_rewards, axis=1)[:, :K].sum(axis=1)
    ordered = -np.sort(-scores, axis=1)
    margin = ordered[:, K - 1] - ordered[:, K] if width > K else np.full(T, np.nan)
    return {
        "rel": best_scores - sel_scores,
        "abs": rewards[rows, oracle_sel].sum(axis=1) - sel_rewards,
        "gap": top_rewards - sel_rewards,
        "oracle_selected": oracle_sel,
        "margin": margin,
    }


@dataclass(frozen=True)
class ConfidenceBand:
    mean: np.ndarray
    half_width: np.ndarray
    num_runs: int
    level: float = 0.95
    method: str = "normal"


def aggregate_ci(series, level: float = 0.95) -> ConfidenceBand:
    """Pointwise mean and normal-approximation half-width over runs."""
    data = np.asarray(series, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n = data.shape[0]
    if n < 2:
        raise ValueError("need at least two runs for a confidence band")
    z = Z_975 if level == 0.95 else float(norm.ppf(0.5 + level / 2))
    sd = data.std(axis=0, ddof=1)
    return ConfidenceBand(data.mean(axis=0), z * sd / math.sqrt(n), n, level)


def growth_exponent(cumulative, fraction: float = 0.5) -> float:
    """Least-squares slope of ``log R_t`` on ``log t`` over the last ``fraction`` of the horizon.

    Rounds with nonpositive cumulative value are dropped first; ``nan`` if
    fewer than two points remain.
    """
    y = np.asarray(cumulative, dtype=float)
    t = np.arange(1, y.size + 1, dtype=float)
    start = int(math.floor(y.size * (1.0 - fraction)))
    t, y = t[start:], y[start:]
    keep = y > 0
    if keep.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(t[keep]), np.log(y[keep]), 1)
    return float(slope)
