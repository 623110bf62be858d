"""Bandit learners that rank arms from evaluator scores.

Every policy follows the same protocol: ``select(phi, K, rng)`` sees only
the ``K_t x J`` evaluation matrix and returns ``K`` sorted arm indices;
``update(selected, rewards, phi)`` then receives the true rewards of the
selected arms only, in the order of ``selected``.
"""
from __future__ import annotations

import math

import numpy as np

from .estimators import (
    DegenerateEstimateError,
    StreamingMean,
    UcbEstimatorState,
    shrink_alpha,
    solve_glm_mle,
    solve_kkt_lambda,
)
from .model import LinkFunction
from .oracle import floor_sigma, top_k, weights_from_alpha


def _uniform_subset(num_arms: int, K: int, rng: np.random.Generator) -> np.ndarray:
    return np.sort(rng.choice(num_arms, size=K, replace=False))


class Policy:
    """Base class; subclasses override :meth:`select` and usually :meth:`update`."""

    name = "policy"
    # what alpha_estimate targets: "alpha", "scaled_alpha" (mean reward times alpha) or None
    estimate_target: str | None = None

    def __init__(self, link: LinkFunction | None = None):
        self.link = link or LinkFunction()

    def features(self, phi) -> np.ndarray:
        return self.link.inverse(np.asarray(phi, dtype=float))

    def select(self, phi, K: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def update(self, selected, rewards, phi) -> None:
        pass

    @property
    def alpha_estimate(self) -> np.ndarray | None:
        return None

    @property
    def weights(self) -> np.ndarray | None:
        return None


class OraclePolicy(Policy):
    """Fixed-weight aggregator with the true calibration; the regret reference."""

    name = "oracle"

    def __init__(self, w, link: LinkFunction | None = None):
        super().__init__(link)
        self._w = np.asarray(w, dtype=float)

    @property
    def weights(self):
        return self._w

    def select(self, phi, K, rng):
        return top_k(self.features(phi) @ self._w, K)


class _SampleBuffer:
    """Growable store of (reward, evaluation row) pairs."""

    def __init__(self, dim: int):
        self.r = np.empty(64)
        self.phi = np.empty((64, dim))
        self.size = 0

    def extend(self, rewards, rows) -> None:
        n = len(rewards)
        while self.size + n > self.r.size:
            self.r = np.resize(self.r, 2 * self.r.size)
            self.phi = np.resize(self.phi, (2 * self.phi.shape[0], self.phi.shape[1]))
        self.r[self.size:self.size + n] = rewards
        self.phi[self.size:self.size + n] = rows
        self.size += n

    def view(self):
        return self.r[:self.size], self.phi[:self.size]


class GlmEpsGreedy(Policy):
    """epsilon-greedy over the plug-in oracle weights of a per-evaluator MLE.

    ``explore_only=True`` fits only on exploration rounds (decorrelated from
    the evaluation noise); ``explore_only=False`` fits on every round, which
    with ``epsilon=0`` is the plain greedy learner.
    """

    estimate_target = "alpha"

    def __init__(self, sigma, link: LinkFunction | None = None, epsilon=0.1, lam: float | None = None,
                 explore_only: bool = True, resolve_every: int = 1, name: str | None = None):
        super().__init__(link)
        self.sigma = floor_sigma(sigma)
        J = self.sigma.size
        self.epsilon = epsilon
        self.lam = 1.0 / J if lam is None else float(lam)
        self.explore_only = explore_only
        self.resolve_every = max(1, int(resolve_every))
        self.name = name or ("glm-eps-greedy" if explore_only else "glm-eps-greedy-all")
        self._alpha = np.zeros(J)
        self._w = np.zeros(J)
        self._buffer = _SampleBuffer(J)
        self._sum_r_phi = np.zeros(J)
        self._sum_r2 = 0.0
        self._count = 0
        self._pending = 0
        self._explored = False
        self._t = 0

    @property
    def dataset_size(self) -> int:
        return self._count

    @property
    def alpha_estimate(self):
        return self._alpha

    @property
    def weights(self):
        return self._w

    def _epsilon(self) -> float:
        eps = self.epsilon(self._t) if callable(self.epsilon) else self.epsilon
        if not 0.0 <= eps <= 1.0:
            raise ValueError("exploration rate must lie in [0, 1]")
        return eps

    def select(self, phi, K, rng):
        self._t += 1
        eps = self._epsilon()
        # one Bernoulli draw per round, even when eps is 0 or 1, keeps rng use uniform
        self._explored = bool(rng.random() < eps)
        if self._explored:
            return _uniform_subset(len(phi), K, rng)
        return top_k(self.features(phi) @ self._w, K)

    def update(self, selected, rewards, phi):
        if self.explore_only and not self._explored:
            return
        rows = np.asarray(phi, dtype=float)[np.asarray(selected)]
        rewards = np.asarray(rewards, dtype=float)
        if self.link.is_identity:
            self._sum_r_phi += rewards @ rows
            self._sum_r2 += float(rewards @ rewards)
        else:
            self._buffer.extend(rewards, rows)
        self._count += rewards.size
        self._pending += 1
        if self._pending >= self.resolve_every:
            self.refit()

    def refit(self) -> None:
        self._pending = 0
        if self.link.is_identity:
            denom = self._sum_r2 + self.lam
            self._alpha = self._sum_r_phi / denom if denom > 0 else np.zeros_like(self._alpha)
        else:
            r, phi = self._buffer.view()
            self._alpha, _ = solve_glm_mle(r, phi, self.lam, self.link, x0=self._alpha)
        self._w = weights_from_alpha(self._alpha, self.sigma)


class Esag(Policy):
    """Greedy on weights built from the running mean of all evaluation rows.

    The mean of the rows estimates ``mean_reward * alpha``; the unknown scale
    does not change the ranking, so observed rewards are never used.
    """

    name = "esag"
    estimate_target = "scaled_alpha"

    def __init__(self, sigma, link: LinkFunction | None = None, name: str | None = None):
        super().__init__(link)
        self.sigma = floor_sigma(sigma)
        self._mean = StreamingMean(self.sigma.size)
        self._w = np.zeros(self.sigma.size)
        if name:
            self.name = name

    @property
    def alpha_estimate(self):
        return self._mean.mean

    @property
    def weights(self):
        return self._w

    def select(self, phi, K, rng):
        return top_k(self.features(phi) @ self._w, K)

    def update(self, selected, rewards, phi):
        self._mean.update(self.features(phi))
        self._w = weights_from_alpha(self._mean.mean, self.sigma)


class EvalBasedUcb(Policy):
    """Optimistic weights from the least favourable slope vector in a confidence ball."""

    name = "eval-ucb"
    estimate_target = "alpha"

    def __init__(self, sigma, link: LinkFunction | None = None, delta: float = 0.1, name: str | None = None):
        super().__init__(link)
        self.sigma = floor_sigma(sigma)
        self.delta = delta
        self.state = UcbEstimatorState(self.sigma.size)
        self._w = np.zeros(self.sigma.size)
        self.last_beta = math.inf
        self.last_lambda = math.nan
        if name:
            self.name = name

    @property
    def alpha_estimate(self):
        est = self.state.alpha_hat
        return np.zeros(self.sigma.size) if est is None else est

    @property
    def weights(self):
        return self._w

    def current_weights(self, K: int) -> np.ndarray | None:
        alpha_hat = self.state.alpha_hat
        if alpha_hat is None:
            return None
        beta = self.state.beta(K, self.sigma, self.delta)
        self.last_beta = beta
        if np.linalg.norm(alpha_hat) <= beta:
            self.last_lambda = math.nan
            return weights_from_alpha(alpha_hat, self.sigma)
        try:
            lam = solve_kkt_lambda(alpha_hat, self.sigma, beta)
        except DegenerateEstimateError:
            return weights_from_alpha(alpha_hat, self.sigma)
        self.last_lambda = lam
        return weights_from_alpha(shrink_alpha(alpha_hat, self.sigma, beta, lam), self.sigma)

    def select(self, phi, K, rng):
        w = self.current_weights(K)
        if w is None:
            return _uniform_subset(len(phi), K, rng)
        self._w = w
        return top_k(self.features(phi) @ w, K)

    def update(self, selected, rewards, phi):
        rows = self.features(np.asarray(phi, dtype=float)[np.asarray(selected)])
        self.state.update(rows, rewards)


class LinUcb(Policy):
    """Optimistic ridge regression of rewards on ``g^-1(phi)`` features.

    The confidence radius is the self-normalized bound
    ``R sqrt(2 log(1/delta) + log det V - J log lam) + sqrt(lam) S``; pass
    ``radius`` to fix it instead.
    """

    name = "linucb"

    def __init__(self, num_evaluators: int, link: LinkFunction | None = None, lam: float = 1.0,
                 noise_scale: float = 1.0, delta: float = 0.1, theta_bound: float = 1.0,
                 radius: float | None = None, name: str | None = None):
        super().__init__(link)
        J = num_evaluators
        self.lam = lam
        self.noise_scale = noise_scale
        self.delta = delta
        self.theta_bound = theta_bound
        self.fixed_radius = radius
        self.gram = lam * np.eye(J)
        self.gram_inv = np.eye(J) / lam
        self.response = np.zeros(J)
        self._logdet_ratio = 0.0
        if name:
            self.name = name

    @property
    def theta(self) -> np.ndarray:
        return self.gram_inv @ self.response

    @property
    def weights(self):
        return self.theta

    def radius(self) -> float:
        if self.fixed_radius is not None:
            return self.fixed_radius
        inner = 2.0 * math.log(1.0 / self.delta) + self._logdet_ratio
        return self.noise_scale * math.sqrt(inner) + math.sqrt(self.lam) * self.theta_bound

    def scores(self, x) -> np.ndarray:
        widths = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", x, self.gram_inv, x), 0.0))
        return x @ self.theta + self.radius() * widths

    def select(self, phi, K, rng):
        return top_k(self.scores(self.features(phi)), K)

    def update(self, selected, rewards, phi):
        rows = self.features(np.asarray(phi, dtype=float)[np.asarray(selected)])
        for x, r in zip(rows, np.asarray(rewards, dtype=float)):
            vx = self.gram_inv @ x
            denom = 1.0 + x @ vx
            self.gram_inv -= np.outer(vx, vx) / denom
            self._logdet_ratio += math.log(denom)
            self.gram += np.outer(x, x)
            self.response += r * x


class Exp4P(Policy):
    """Exp4.P with one expert per evaluator plus a uniform expert.

    Evaluator ``j`` advises a point mass on its top-scored arm. ``K`` arms are
    drawn without replacement from the floored mixture; the expert update
    uses the first draw, whose probability is exactly the mixture's.
    """

    name = "exp4p"

    def __init__(self, num_evaluators: int, horizon: int, link: LinkFunction | None = None,
                 delta: float = 0.1, reward_scale: float = 1.0, p_min: float | None = None,
                 name: str | None = None):
        super().__init__(link)
        self.num_experts = num_evaluators + 1
        self.horizon = max(1, int(horizon))
        self.delta = delta
        self.reward_scale = reward_scale
        self.fixed_p_min = p_min
        self.log_weights = np.zeros(self.num_experts)
        self._advice = None
        self._probs = None
        self._first = None
        self._p_min = 0.0
        if name:
            self.name = name

    @property
    def expert_weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    def advice(self, phi) -> np.ndarray:
        x = self.features(phi)
        n, J = x.shape
        adv = np.zeros((self.num_experts, n))
        adv[np.arange(J), np.argmax(x, axis=0)] = 1.0
        adv[J] = 1.0 / n
        return adv

    def arm_distribution(self, phi):
        adv = self.advice(phi)
        n = adv.shape[1]
        p_min = self.fixed_p_min
        if p_min is None:
            p_min = math.sqrt(math.log(self.num_experts) / (n * self.horizon))
        p_min = min(p_min, 1.0 / n)
        probs = (1.0 - n * p_min) * (self.expert_weights @ adv) + p_min
        probs = probs / probs.sum()
        return adv, probs, p_min

    def select(self, phi, K, rng):
        adv, probs, p_min = self.arm_distribution(phi)
        draw = rng.choice(probs.size, size=K, replace=False, p=probs)
        self._advice, self._probs, self._p_min = adv, probs, p_min
        self._first = int(draw[0])
        return np.sort(draw)

    def update(self, selected, rewards, phi):
        if self._advice is None:
            return
        selected = np.asarray(selected)
        pos = int(np.flatnonzero(selected == self._first)[0])
        gain = float(np.asarray(rewards, dtype=float)[pos]) / self.reward_scale
        n = self._probs.size
        est = np.zeros(n)
        est[self._first] = gain / self._probs[self._first]
        y_hat = self._advice @ est
        v_hat = self._advice @ (1.0 / self._probs)
        bonus = math.sqrt(math.log(self.num_experts / self.delta) / (n * self.horizon))
        self.log_weights += 0.5 * self._p_min * (y_hat + v_hat * bonus)
        self._advice = None


class RandEvaluator(Policy):
    """Ranks arms by one evaluator drawn uniformly each round."""

    name = "rand"

    def __init__(self, link: LinkFunction | None = None, name: str | None = None):
        super().__init__(link)
        self.last_evaluator = -1
        if name:
            self.name = name

    def select(self, phi, K, rng):
        x = self.features(phi)
        j = int(rng.integers(x.shape[1]))
        self.last_evaluator = j
        return top_k(x[:, j], K)


POLICY_NAMES = (
    "oracle", "glm-eps-greedy", "glm-eps-greedy-all", "glm-greedy", "esag",
    "eval-ucb", "linucb", "exp4p", "rand",
)


def epsilon_for_horizon(horizon: int, coef: float = 1.0, power: float = -1.0 / 3.0) -> float:
    return min(1.0, coef * float(horizon) ** power)


def make_policy(kind: str, *, sigma, link: LinkFunction, horizon: int, w_plus=None,
                reward_scale: float = 1.0, delta: float = 0.1, label: str | None = None,
                **params) -> Policy:
    """Build a policy from its registry name and hyperparameters.

    Recognized hyperparameters: ``epsilon`` (or ``epsilon_coef`` and
    ``epsilon_power`` for ``coef * T^power``), ``lam``, ``resolve_every``,
    ``radius``, ``theta_bound``, ``noise_scale``, ``p_min``.
    """
    sigma = np.asarray(sigma, dtype=float)
    J = sigma.size
    name = label or kind
    if kind == "oracle":
        if w_plus is None:
            raise ValueError("the oracle policy needs the true weights")
        pol = OraclePolicy(w_plus, link)
    elif kind in ("glm-eps-greedy", "glm-eps-greedy-all", "glm-greedy"):
        if kind == "glm-greedy":
            eps = 0.0
        elif "epsilon" in params:
            eps = float(params["epsilon"])
        else:
            eps = epsilon_for_horizon(horizon, params.get("epsilon_coef", 1.0),
                                      params.get("epsilon_power", -1.0 / 3.0))
        pol = GlmEpsGreedy(sigma, link, epsilon=eps, lam=params.get("lam"),
                           explore_only=(kind == "glm-eps-greedy"),
                           resolve_every=params.get("resolve_every", 1), name=name)
    elif kind == "esag":
        pol = Esag(sigma, link)
    elif kind == "eval-ucb":
        pol = EvalBasedUcb(sigma, link, delta=params.get("delta", delta))
    elif kind == "linucb":
        pol = LinUcb(J, link, lam=params.get("lam", 1.0),
                     noise_scale=params.get("noise_scale", float(np.max(sigma))),
                     delta=params.get("delta", delta), theta_bound=params.get("theta_bound", 1.0),
                     radius=params.get("radius"))
    elif kind == "exp4p":
        pol = Exp4P(J, horizon, link, delta=params.get("delta", delta), reward_scale=reward_scale,
                    p_min=params.get("p_min"))
    elif kind == "rand":
        pol = RandEvaluator(link)
    else:
        raise ValueError(f"unknown policy {kind!r}; choose from {', '.join(POLICY_NAMES)}")
    pol.name = name
    return pol
