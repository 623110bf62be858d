"""Link functions, evaluator models, reward distributions and round sampling."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

# evaluations under the logistic link are kept this far inside (0, 1)
PROB_MARGIN = 1e-6
MAX_REJECTION_TRIES = 100


class DomainError(ValueError):
    """Raised when a link inverse is evaluated outside the link's range."""


class LinkKind(str, enum.Enum):
    IDENTITY = "identity"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class LinkFunction:
    """Strictly increasing link ``g`` of the generalized linear evaluation model."""

    kind: LinkKind = LinkKind.IDENTITY

    @classmethod
    def from_name(cls, name: str | LinkKind) -> LinkFunction:
        return cls(LinkKind(name))

    @property
    def is_identity(self) -> bool:
        return self.kind is LinkKind.IDENTITY

    def __call__(self, x):
        if self.kind is LinkKind.IDENTITY:
            return x
        return special.expit(x)

    def inverse(self, y):
        if self.kind is LinkKind.IDENTITY:
            return y
        y_arr = np.asarray(y, dtype=float)
        if np.any(~((y_arr > 0.0) & (y_arr < 1.0))):
            raise DomainError("logistic inverse needs values strictly inside (0, 1)")
        return special.logit(y)

    def derivative(self, x):
        if self.kind is LinkKind.IDENTITY:
            return np.ones_like(np.asarray(x, dtype=float))
        s = special.expit(x)
        return s * (1.0 - s)

    def slope_lower_bound(self, lo: float, hi: float) -> float:
        """``c_g``: infimum of ``g'`` over the argument interval ``[lo, hi]``."""
        if self.kind is LinkKind.IDENTITY:
            return 1.0
        # g' of the logistic is unimodal at 0, so the infimum sits at an endpoint
        return float(min(self.derivative(lo), self.derivative(hi)))

    def range_bounds(self) -> tuple[float, float]:
        if self.kind is LinkKind.IDENTITY:
            return -math.inf, math.inf
        return 0.0, 1.0


def link_eval(link: LinkFunction, x):
    return link(x)


def link_inverse(link: LinkFunction, y):
    return link.inverse(y)


class RewardKind(str, enum.Enum):
    TRUNCATED_GAUSSIAN = "truncated_gaussian"
    UNIFORM = "uniform"
    BERNOULLI = "bernoulli"


@dataclass(frozen=True)
class RewardDistribution:
    """Reward law ``nu`` supported on ``[0, C]``.

    Use the ``truncated_gaussian``, ``uniform`` and ``bernoulli`` constructors;
    they validate the parameters and cache the first two moments.
    """

    kind: RewardKind
    params: tuple[float, ...]
    support_bound: float
    mean: float = field(default=math.nan, compare=False)
    second_moment: float = field(default=math.nan, compare=False)

    @classmethod
    def truncated_gaussian(cls, mu: float = 0.0, sd: float = 1.0, lo: float = 0.0, hi: float = 20.0):
        if sd <= 0 or not lo < hi or lo < 0:
            raise ValueError("truncated gaussian needs sd > 0 and 0 <= lo < hi")
        a, b = (lo - mu) / sd, (hi - mu) / sd
        frozen = stats.truncnorm(a, b, loc=mu, scale=sd)
        return cls(RewardKind.TRUNCATED_GAUSSIAN, (mu, sd, lo, hi), hi,
                   float(frozen.mean()), float(frozen.moment(2)))

    @classmethod
    def uniform(cls, lo: float = 0.0, hi: float = 1.0):
        if not 0 <= lo < hi:
            raise ValueError("uniform rewards need 0 <= lo < hi")
        return cls(RewardKind.UNIFORM, (lo, hi), hi,
                   (lo + hi) / 2.0, (lo * lo + lo * hi + hi * hi) / 3.0)

    @classmethod
    def bernoulli(cls, p: float = 0.5, scale: float = 1.0):
        if not 0 <= p <= 1 or scale <= 0:
            raise ValueError("bernoulli rewards need p in [0, 1] and scale > 0")
        return cls(RewardKind.BERNOULLI, (p, scale), scale, p * scale, p * scale * scale)

    @classmethod
    def from_spec(cls, spec: dict) -> RewardDistribution:
        spec = dict(spec)
        kind = RewardKind(spec.pop("kind", "truncated_gaussian"))
        if kind is RewardKind.TRUNCATED_GAUSSIAN:
            return cls.truncated_gaussian(**spec)
        if kind is RewardKind.UNIFORM:
            return cls.uniform(**spec)
        return cls.bernoulli(**spec)

    def to_spec(self) -> dict:
        names = {
            RewardKind.TRUNCATED_GAUSSIAN: ("mu", "sd", "lo", "hi"),
            RewardKind.UNIFORM: ("lo", "hi"),
            RewardKind.BERNOULLI: ("p", "scale"),
        }[self.kind]
        return {"kind": self.kind.value, **dict(zip(names, self.params))}

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        if self.kind is RewardKind.UNIFORM:
            lo, hi = self.params
            return rng.uniform(lo, hi, size=size)
        if self.kind is RewardKind.BERNOULLI:
            p, scale = self.params
            return scale * (rng.random(size) < p)
        return _truncated_normal_icdf(rng.random(size), *self.params)

    def expect(self, fn) -> float:
        """``E[fn(r)]`` by quadrature over the density (exact sum for Bernoulli)."""
        if self.kind is RewardKind.BERNOULLI:
            p, scale = self.params
            return float((1 - p) * fn(0.0) + p * fn(scale))
        if self.kind is RewardKind.UNIFORM:
            lo, hi = self.params
            val, _ = integrate.quad(lambda x: fn(x) / (hi - lo), lo, hi, limit=200)
            return float(val)
        mu, sd, lo, hi = self.params
        frozen = stats.truncnorm((lo - mu) / sd, (hi - mu) / sd, loc=mu, scale=sd)
        # most of the mass sits within a few sd of the mode; split there for quad
        upper = min(hi, max(lo, mu) + 12 * sd)
        val, _ = integrate.quad(lambda x: fn(x) * frozen.pdf(x), lo, upper, limit=200)
        if upper < hi:
            tail, _ = integrate.quad(lambda x: fn(x) * frozen.pdf(x), upper, hi, limit=200)
            val += tail
        return float(val)


def _truncated_normal_icdf(u, mu, sd, lo, hi):
    a, b = (lo - mu) / sd, (hi - mu) / sd
    if a > 0:
        # upper tail: mirror so the CDF differences stay well conditioned
        sa, sb = special.ndtr(-a), special.ndtr(-b)
        z = -special.ndtri(sa - u * (sa - sb))
    else:
        fa, fb = special.ndtr(a), special.ndtr(b)
        z = special.ndtri(fa + u * (fb - fa))
    return np.clip(mu + sd * z, lo, hi)


def sample_rewards(dist: RewardDistribution, num_arms: int, rng: np.random.Generator) -> np.ndarray:
    if num_arms < 1:
        raise ValueError("need at least one arm")
    return dist.sample(num_arms, rng)


class NoiseKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    TRUNCATED_GAUSSIAN = "truncated_gaussian"


class Truncation(str, enum.Enum):
    """How truncated-Gaussian evaluation noise is confined.

    ``RANGE`` keeps the evaluation inside ``[g(0), g(alpha_j C)]`` (shrunk by a
    margin) by rejection; ``SYMMETRIC`` truncates the noise to ``[-m, m]`` with
    ``m`` the distance from ``g(alpha_j r)`` to the nearest end of the link
    range, which keeps the noise exactly zero-mean.
    """

    RANGE = "range"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class EvaluatorModel:
    alpha: np.ndarray
    sigma: np.ndarray
    link: LinkFunction = field(default_factory=LinkFunction)
    noise: NoiseKind = NoiseKind.GAUSSIAN
    truncation: Truncation = Truncation.RANGE

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if alpha.ndim != 1 or alpha.shape != sigma.shape or alpha.size < 1:
            raise ValueError("alpha and sigma must be 1-d vectors of equal length >= 1")
        if np.any(sigma < 0) or not np.all(np.isfinite(alpha)):
            raise ValueError("sigma must be nonnegative and alpha finite")
        alpha.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "noise", NoiseKind(self.noise))
        object.__setattr__(self, "truncation", Truncation(self.truncation))

    @property
    def num_evaluators(self) -> int:
        return self.alpha.size

    @property
    def deterministic(self) -> bool:
        """True when every evaluator is noiseless (the degenerate case)."""
        return bool(np.all(self.sigma == 0))

    def noise_scale(self) -> np.ndarray:
        if self.noise is NoiseKind.TRUNCATED_GAUSSIAN:
            return math.sqrt(2.0) * self.sigma
        return self.sigma


def generate_evaluations(rewards, model: EvaluatorModel, rng: np.random.Generator,
                         support_bound: float | None = None) -> np.ndarray:
    """Evaluation matrix ``phi[..., i, j] = g(alpha_j r_i) + eps_ij``.

    ``rewards`` may carry leading batch dimensions; the evaluator axis is
    appended last. ``support_bound`` (C) is only needed for ``Truncation.RANGE``.
    """
    r = np.asarray(rewards, dtype=float)
    mean = model.link(r[..., None] * model.alpha)
    scale = model.noise_scale()
    noise = rng.standard_normal(mean.shape) * scale
    if model.noise is NoiseKind.GAUSSIAN:
        phi = mean + noise
        if not model.link.is_identity:
            phi = np.clip(phi, PROB_MARGIN, 1.0 - PROB_MARGIN)
        return phi
    lo, hi = _truncation_window(mean, model, support_bound)
    phi = mean + noise
    bad = (phi < lo) | (phi > hi)
    for _ in range(MAX_REJECTION_TRIES):
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        redraw = rng.standard_normal(n_bad) * np.broadcast_to(scale, mean.shape)[bad]
        phi[bad] = mean[bad] + redraw
        bad = (phi < lo) | (phi > hi)
    return np.clip(phi, lo, hi)


def _truncation_window(mean, model: EvaluatorModel, support_bound):
    link = model.link
    if model.truncation is Truncation.RANGE:
        if support_bound is None:
            raise ValueError("range truncation needs the reward support bound C")
        ends = np.stack([np.broadcast_to(link(0.0), model.alpha.shape),
                         link(model.alpha * support_bound)])
        lo = ends.min(axis=0) + PROB_MARGIN
        hi = ends.max(axis=0) - PROB_MARGIN
        # a flat evaluator (alpha_j = 0) has an empty window; fall back to the link range
        flat = hi <= lo
        if np.any(flat):
            r_lo, r_hi = link.range_bounds()
            lo = np.where(flat, r_lo + PROB_MARGIN, lo)
            hi = np.where(flat, r_hi - PROB_MARGIN, hi)
        return np.broadcast_to(lo, mean.shape), np.broadcast_to(hi, mean.shape)
    r_lo, r_hi = link.range_bounds()
    half = np.minimum(mean - r_lo, r_hi - mean) - PROB_MARGIN
    half = np.maximum(half, 0.0)
    return mean - half, mean + half


@dataclass(frozen=True)
class RoundObservation:
    t: int
    rewards: np.ndarray
    phi: np.ndarray

    @property
    def num_arms(self) -> int:
        return self.rewards.size


def sample_num_arms(K: int, K_max: int, variable: bool, rng: np.random.Generator, size=None):
    """Arms per round: constant ``K_max`` or uniform on ``{K+1, ..., K_max}``."""
    if not 1 <= K < K_max:
        raise ValueError("need 1 <= K < K_max")
    if not variable:
        return K_max if size is None else np.full(size, K_max, dtype=int)
    return rng.integers(K + 1, K_max + 1, size=size)


def sample_round(t: int, dist: RewardDistribution, model: EvaluatorModel, num_arms: int,
                 rng: np.random.Generator) -> RoundObservation:
    rewards = sample_rewards(dist, num_arms, rng)
    phi = generate_evaluations(rewards, model, rng, support_bound=dist.support_bound)
    return RoundObservation(t, rewards, phi)
