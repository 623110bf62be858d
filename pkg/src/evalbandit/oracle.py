"""Closed-form oracle aggregation, top-K ranking and gap bounds."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import LinkFunction

SIGMA_FLOOR = 1e-9


class DegenerateModelError(ValueError):
    """No evaluator carries signal, so the oracle weights are undefined."""


class Setting(str, enum.Enum):
    GLM = "glm"
    LINEAR = "linear"


@dataclass(frozen=True)
class WeightVector:
    w: np.ndarray
    setting: Setting = Setting.GLM
    satisfies_constraint: bool = False

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.w, dtype=dtype)

    def scaled(self, factor: float) -> WeightVector:
        return WeightVector(self.w * factor, self.setting, False)


@dataclass(frozen=True)
class GapBoundInputs:
    K: int
    K_max: int
    J: int
    delta: float
    alpha: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 1 <= self.K < self.K_max:
            raise ValueError("need 1 <= K < K_max")


def floor_sigma(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < SIGMA_FLOOR):
        warnings.warn(f"noiseless evaluators: sigma floored at {SIGMA_FLOOR:g}", RuntimeWarning,
                      stacklevel=3)
        sigma = np.maximum(sigma, SIGMA_FLOOR)
    return sigma


def snr_norm(alpha, sigma) -> float:
    """``||alpha / sigma||_2``."""
    return float(np.linalg.norm(np.asarray(alpha, float) / floor_sigma(sigma)))


def weights_from_alpha(alpha, sigma) -> np.ndarray:
    """``w_j = alpha_j / (sigma_j^2 ||alpha/sigma||^2)``; zero vector when alpha is all zero.

    Used both by the oracle (true alpha) and by learners (plug-in estimates).
    """
    alpha = np.asarray(alpha, dtype=float)
    inv_var = 1.0 / np.square(sigma)
    denom = float(np.dot(alpha * alpha, inv_var))
    if denom == 0.0 or not np.isfinite(denom):
        return np.zeros_like(alpha)
    return alpha * inv_var / denom


def compute_oracle_weights(alpha, sigma, setting: Setting | str = Setting.GLM) -> WeightVector:
    alpha = np.asarray(alpha, dtype=float)
    sigma = floor_sigma(sigma)
    if alpha.shape != sigma.shape:
        raise ValueError("alpha and sigma must have the same length")
    if not np.any(alpha != 0):
        raise DegenerateModelError("all calibration slopes are zero")
    w = weights_from_alpha(alpha, sigma)
    ok = abs(float(np.dot(w, alpha)) - 1.0) < 1e-10
    return WeightVector(w, Setting(setting), ok)


def estimate_rewards(w, phi, link: LinkFunction) -> np.ndarray:
    """Aggregated reward estimates ``<w, g^-1(phi_i)>`` for every arm (rows of ``phi``)."""
    weights = np.asarray(w, dtype=float)
    if isinstance(w, WeightVector) and w.setting is Setting.LINEAR:
        return np.asarray(phi, dtype=float) @ weights
    return link.inverse(np.asarray(phi, dtype=float)) @ weights


def top_k(scores, K: int) -> np.ndarray:
    """Indices of the ``K`` largest scores, lowest index first on ties, sorted ascending."""
    scores = np.asarray(scores, dtype=float)
    if K > scores.shape[-1]:
        raise ValueError(f"cannot select {K} arms out of {scores.shape[-1]}")
    if K < 0:
        raise ValueError("K must be nonnegative")
    order = np.argsort(-scores, axis=-1, kind="stable")
    return np.sort(order[..., :K], axis=-1)


def suboptimality_gap(rewards, selected, K: int) -> float:
    rewards = np.asarray(rewards, dtype=float)
    selected = np.asarray(selected, dtype=int)
    if selected.size != K:
        raise ValueError("selection size differs from K")
    best = np.sort(rewards)[::-1][:K].sum()
    return float(best - rewards[selected].sum())


def oracle_gap_bound(inputs: GapBoundInputs, setting: Setting | str = Setting.GLM) -> float:
    """High-probability bound on the oracle's per-round suboptimality gap."""
    K = inputs.K
    norm = snr_norm(inputs.alpha, inputs.sigma)
    bound = 2 * K * math.sqrt(math.log(inputs.K_max * math.e / inputs.delta))
    if Setting(setting) is Setting.GLM:
        bound += K * math.sqrt(inputs.J)
    return bound / norm


def link_sup(alpha, link: LinkFunction, C: float) -> float:
    """``||g||_inf = max_{j, x in [0, C]} |g(alpha_j x)|`` (g monotone: check endpoints)."""
    alpha = np.asarray(alpha, dtype=float)
    ends = np.concatenate([np.atleast_1d(link(0.0 * alpha)), np.atleast_1d(link(alpha * C))])
    return float(np.max(np.abs(ends)))


def compute_theory_constants(alpha, sigma, K: int, K_max: int, J: int, delta: float, C: float,
                             link: LinkFunction | None = None) -> dict:
    """Diagnostic constants of the regret bounds.

    ``Phi`` uses ``||g||_inf`` and ``Phi_C`` replaces it with the support bound
    ``C``. ``Phi_prime`` is the linear-setting analogue. All values are
    informational; nothing in the learners depends on them.
    """
    link = link or LinkFunction()
    alpha = np.asarray(alpha, dtype=float)
    sigma = floor_sigma(sigma)
    s_inf = float(np.max(sigma))
    g_sup = link_sup(alpha, link, C)
    noise_part = 2 * K * s_inf * (2 * math.sqrt(J) + math.sqrt(K * math.log(math.e * K_max / (K * delta))))
    snr = np.linalg.norm(alpha / sigma)
    s_term = ((np.linalg.norm(alpha / sigma**2) + np.linalg.norm(sigma**-2.0))
              * np.linalg.norm(alpha / sigma**2) / snr**4
              + (np.sum(sigma**-4.0) ** 0.25 / snr) ** 2)
    phi_prime = (2 * np.linalg.norm(alpha) * C * math.log(4 / delta)
                 + 2 * s_inf * (2 * math.sqrt(J) + math.sqrt(K * math.log(K_max / (K * delta)))))
    return {
        "Phi": noise_part + K * g_sup,
        "Phi_C": noise_part + K * C,
        "S": float(s_term),
        "Phi_prime": float(phi_prime),
        "g_sup": g_sup,
    }


def harmonic_mean_arms(num_arms) -> float:
    """Harmonic average of arms per round, ``(T-1) / sum_{t>=2} (t-1)/sum_{l<t} K_l``.

    The first round has no history and is left out of both numerator and
    denominator, so a constant count ``K_t = k`` gives exactly ``k``.
    """
    k = np.asarray(num_arms, dtype=float)
    T = k.size
    if T < 2:
        return float(k[0]) if T else math.nan
    prefix = np.cumsum(k)[:-1]
    t_minus_1 = np.arange(1, T, dtype=float)
    return (T - 1) / float(np.sum(t_minus_1 / prefix))
