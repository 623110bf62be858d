"""Estimation kernels shared by the learners.

* per-evaluator regularized GLM maximum likelihood (bracketed 1-D root solve),
* a compensated streaming mean of evaluation rows,
* running sums and the confidence width of the optimistic learner,
* the KKT multiplier solve and the diagonal shrinkage it feeds.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import LinkFunction

MAX_BRACKET_DOUBLINGS = 60
MAX_ROOT_STEPS = 200
MLE_TOL = 1e-10


class ConvergenceWarning(RuntimeWarning):
    pass


class DegenerateEstimateError(ValueError):
    """The estimate sits inside its own confidence ball; no KKT multiplier exists."""


@dataclass
class MleDataset:
    """Pairs ``(r, phi_j)`` for one evaluator, or a shared reward column with ``J`` evaluation columns."""

    rewards: np.ndarray
    evaluations: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=float).reshape(-1)
        self.evaluations = np.asarray(self.evaluations, dtype=float)
        if self.evaluations.shape[0] != self.rewards.size:
            raise ValueError("one evaluation row per reward is required")
        if self.lam < 0:
            raise ValueError("regularizer must be nonnegative")


def mle_glm_1d(data: MleDataset, link: LinkFunction, x0: float | None = None) -> float:
    """Root of ``F(a) = sum r (g(a r) - phi) + lam a`` for a single evaluator.

    Warns with :class:`ConvergenceWarning` (and still returns the best
    iterate) when the tolerance ``|F| < 1e-10 (1 + sum r^2)`` is not met.
    """
    phi = data.evaluations.reshape(-1, 1)
    start = None if x0 is None else np.array([x0], dtype=float)
    est, ok = solve_glm_mle(data.rewards, phi, data.lam, link, start)
    if not ok[0]:
        warnings.warn("GLM MLE root solve did not reach tolerance", ConvergenceWarning, stacklevel=2)
    return float(est[0])


def solve_glm_mle(rewards, phi, lam: float, link: LinkFunction, x0=None):
    """Column-wise MLE for every evaluator. Returns ``(alpha_hat, converged)``."""
    r = np.asarray(rewards, dtype=float)
    phi = np.asarray(phi, dtype=float)
    J = phi.shape[1]
    if r.size == 0:
        return np.zeros(J), np.full(J, lam > 0)
    r2 = float(r @ r)
    tol = MLE_TOL * (1.0 + r2)
    if r2 + lam == 0.0:
        return np.zeros(J), np.zeros(J, dtype=bool)
    if link.is_identity:
        # F is affine in a: exact root
        est = (r @ phi) / (r2 + lam)
        resid = r2 * est - r @ phi + lam * est
        return est, np.abs(resid) < tol
    return _bracketed_newton(r, phi, lam, link, tol, x0)


def _bracketed_newton(r, phi, lam, link, tol, x0):
    J = phi.shape[1]
    target = r @ phi
    r_sq = r * r

    def residual(a):
        s = link(np.multiply.outer(r, a))
        return r @ s - target + lam * a

    def residual_and_slope(a):
        z = np.multiply.outer(r, a)
        s = link(z)
        return r @ s - target + lam * a, r_sq @ link.derivative(z) + lam

    pos = r[r > 0]
    proxy = float(pos.mean()) if pos.size else 1.0
    spread = float(np.max(np.abs(link.inverse(np.clip(phi, 1e-12, 1 - 1e-12))))) if phi.size else 0.0
    half = 10.0 * (1.0 + spread / proxy)
    lo = np.full(J, -half)
    hi = np.full(J, half)
    for _ in range(MAX_BRACKET_DOUBLINGS):
        f_lo, f_hi = residual(lo), residual(hi)
        need_lo, need_hi = f_lo > 0, f_hi < 0
        if not (need_lo.any() or need_hi.any()):
            break
        lo = np.where(need_lo, 2.0 * lo, lo)
        hi = np.where(need_hi, 2.0 * hi, hi)
    bracketed = (residual(lo) <= 0) & (residual(hi) >= 0)

    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.asarray(x0, float), lo, hi)
    f = np.zeros(J)
    for _ in range(MAX_ROOT_STEPS):
        f, slope = residual_and_slope(x)
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        width = hi - lo
        if np.all((np.abs(f) <= 1e-3 * tol) | (width <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(x)))):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - f / slope
        inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
        x = np.where(f == 0, x, np.where(inside, newton, 0.5 * (lo + hi)))
    f = residual(x)
    return x, bracketed & (np.abs(f) < tol)


class StreamingMean:
    """Column-wise running mean with Kahan-compensated sums."""

    def __init__(self, dim: int):
        self.total = np.zeros(dim)
        self._comp = np.zeros(dim)
        self.count = 0

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.total)
        return self.total / self.count

    def update(self, rows) -> StreamingMean:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[0] < 1:
            raise ValueError("need at least one row")
        y = rows.sum(axis=0) - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t
        self.count += rows.shape[0]
        return self


def streaming_mean_update(state: StreamingMean, phi_rows) -> StreamingMean:
    return state.update(phi_rows)


@dataclass
class UcbEstimatorState:
    """Running sums over selected arms: ``sum g^-1(phi)`` per evaluator and ``sum r``."""

    num_evaluators: int
    numerator: np.ndarray = field(init=False)
    reward_sum: float = 0.0
    rounds: int = 0

    def __post_init__(self):
        self.numerator = np.zeros(self.num_evaluators)

    def update(self, ginv_rows, rewards) -> None:
        self.numerator = self.numerator + np.asarray(ginv_rows, dtype=float).sum(axis=0)
        self.reward_sum += float(np.sum(rewards))
        self.rounds += 1

    @property
    def alpha_hat(self) -> np.ndarray | None:
        if self.reward_sum <= 0.0:
            return None
        return self.numerator / self.reward_sum

    def beta(self, K: int, sigma, delta: float) -> float:
        """Confidence width over the completed rounds (``t - 1`` of them)."""
        if self.reward_sum <= 0.0:
            return math.inf
        log_term = math.log(2.0 / delta)
        J = self.num_evaluators
        spread = float(np.sum(np.square(sigma)))
        top = 2.0 * math.sqrt(2.0 * J * log_term) / 3.0 + math.sqrt(self.rounds * K * spread * log_term)
        return top / self.reward_sum


def _kkt_residual(lam, alpha_hat, var, beta2):
    return float(np.sum(np.square(alpha_hat / (lam * var + beta2))))


def solve_kkt_lambda(alpha_hat, sigma, beta: float) -> float:
    """Multiplier ``lam > 0`` with ``sum_j (a_j / (lam s_j^2 + beta^2))^2 = 1 / beta^2``.

    The left side is strictly decreasing in ``lam``; bisection on a
    geometrically grown bracket.
    """
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    var = np.square(np.asarray(sigma, dtype=float))
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not np.linalg.norm(alpha_hat) > beta:
        raise DegenerateEstimateError("||alpha_hat|| <= beta: confidence ball contains the origin")
    beta2 = beta * beta
    target = 1.0 / beta2
    mask = var > 0
    a, v = alpha_hat[mask], var[mask]
    lo, hi = 0.0, 1.0
    while _kkt_residual(hi, a, v, beta2) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise DegenerateEstimateError("no finite multiplier found")
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = _kkt_residual(mid, a, v, beta2)
        if val == target:
            return mid
        if val > target:
            lo = mid
        else:
            hi = mid
    # pick the endpoint with the smaller residual
    f_lo = abs(_kkt_residual(lo, a, v, beta2) - target)
    f_hi = abs(_kkt_residual(hi, a, v, beta2) - target)
    return hi if f_hi <= f_lo else lo


def shrink_alpha(alpha_hat, sigma, beta: float, lam: float) -> np.ndarray:
    """Minimizer of ``||z / sigma||`` over the ball ``||z - alpha_hat|| <= beta`` (given its multiplier)."""
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    if beta == 0:
        return alpha_hat.copy()
    if math.isinf(lam):
        return alpha_hat.copy()
    scaled = lam * np.square(np.asarray(sigma, dtype=float))
    return alpha_hat * scaled / (scaled + beta * beta)


def link_second_moment(alpha_j: float, dist, link: LinkFunction | None = None) -> float:
    """``E_{r ~ nu}[g(alpha_j r)^2]`` by quadrature."""
    link = link or LinkFunction()
    return dist.expect(lambda x: float(link(alpha_j * x)) ** 2)


__all__ = [
    "ConvergenceWarning",
    "DegenerateEstimateError",
    "MleDataset",
    "StreamingMean",
    "UcbEstimatorState",
    "link_second_moment",
    "mle_glm_1d",
    "shrink_alpha",
    "solve_glm_mle",
    "solve_kkt_lambda",
    "streaming_mean_update",
]
