"""Replay of externally supplied evaluation datasets.

Expected CSV header: ``round,arm,reward,eval_1,...,eval_J`` (UTF-8, ``.``
decimal separator). Rows may come in any order; rounds are sorted by
``round`` and arms within a round by ``arm``.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..model import LinkFunction, RoundObservation
from .config import ExperimentConfig
from .runner import EnvironmentTrace, ExperimentResult, run_single

_EVAL_COL = re.compile(r"^eval_(\d+)$")


class ReplayParseError(ValueError):
    """Malformed file; ``line`` is the 1-based physical line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ReplaySchemaError(ValueError):
    pass


@dataclass
class ReplayDataset:
    rounds: list[RoundObservation]
    round_ids: list[int]

    @property
    def num_evaluators(self) -> int:
        return self.rounds[0].phi.shape[1]

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)

    def to_trace(self, link: LinkFunction | None = None) -> EnvironmentTrace:
        """Pad to a rectangular trace; padding never reaches a policy."""
        link = link or LinkFunction()
        width = max(r.num_arms for r in self.rounds)
        T, J = self.num_rounds, self.num_evaluators
        rewards = np.zeros((T, width))
        phi = np.full((T, width, J), float(link(0.0)))
        counts = np.empty(T, dtype=int)
        for t, obs in enumerate(self.rounds):
            k = obs.num_arms
            rewards[t, :k] = obs.rewards
            phi[t, :k] = obs.phi
            counts[t] = k
        return EnvironmentTrace(rewards, phi, counts)

    def check_arms(self, K: int) -> None:
        short = [rid for rid, obs in zip(self.round_ids, self.rounds) if obs.num_arms <= K]
        if short:
            raise ReplaySchemaError(f"rounds {short[:5]} have at most K={K} arms")


def load_replay_dataset(path: str | Path) -> ReplayDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ReplayParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        for col in ("round", "arm", "reward"):
            if col not in header:
                raise ReplayParseError(f"missing column {col!r}", 1)
        eval_cols = sorted((int(m.group(1)), i) for i, h in enumerate(header) if (m := _EVAL_COL.match(h)))
        if not eval_cols:
            raise ReplayParseError("no eval_<j> columns", 1)
        numbers = [n for n, _ in eval_cols]
        if numbers != list(range(1, len(numbers) + 1)):
            raise ReplaySchemaError(f"evaluator columns must be eval_1..eval_J, got {numbers}")
        i_round, i_arm, i_reward = header.index("round"), header.index("arm"), header.index("reward")
        eval_idx = [i for _, i in eval_cols]
        grouped: dict[int, list[tuple[int, float, list[float]]]] = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ReplayParseError(f"expected {len(header)} fields, found {len(row)}", line)
            try:
                rid = int(row[i_round])
                arm = int(row[i_arm])
                reward = float(row[i_reward])
                evals = [float(row[i]) for i in eval_idx]
            except ValueError as exc:
                raise ReplayParseError(f"non-numeric cell ({exc})", line) from None
            if not math.isfinite(reward) or not all(math.isfinite(e) for e in evals):
                raise ReplayParseError("non-finite value", line)
            grouped.setdefault(rid, []).append((arm, reward, evals))
    if not grouped:
        raise ReplayParseError("no data rows", 2)
    rounds, ids = [], []
    for t, rid in enumerate(sorted(grouped)):
        arms = sorted(grouped[rid], key=lambda a: a[0])
        if len({a[0] for a in arms}) != len(arms):
            raise ReplaySchemaError(f"round {rid}: duplicate arm index")
        rewards = np.array([a[1] for a in arms])
        phi = np.array([a[2] for a in arms])
        rounds.append(RoundObservation(t, rewards, phi))
        ids.append(rid)
    return ReplayDataset(rounds, ids)


def export_trace_csv(trace: EnvironmentTrace, path: str | Path) -> Path:
    """Write a trace in the replay format with round-trip (``repr``) precision."""
    path = Path(path)
    J = trace.num_evaluators
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["round", "arm", "reward"] + [f"eval_{j + 1}" for j in range(J)])
        for t in range(trace.horizon):
            rewards, phi = trace.round(t)
            for i in range(rewards.size):
                writer.writerow([t, i, repr(float(rewards[i]))] + [repr(float(v)) for v in phi[i]])
    return path


def fit_evaluators(trace: EnvironmentTrace, link: LinkFunction):
    """Least-squares ``alpha_j`` (no intercept) of ``g^-1(phi_j)`` on ``r`` and the residual scale."""
    mask = np.arange(trace.rewards.shape[1])[None, :] < trace.num_arms[:, None]
    r = trace.rewards[mask]
    x = link.inverse(trace.phi[mask])
    denom = float(r @ r)
    if denom == 0.0:
        raise ReplaySchemaError("all rewards are zero; cannot fit evaluator slopes")
    alpha = (r @ x) / denom
    resid = x - np.outer(r, alpha)
    dof = max(r.size - 1, 1)
    sigma = np.sqrt(np.sum(resid**2, axis=0) / dof)
    return alpha, sigma


def run_replay(dataset: ReplayDataset, cfg: ExperimentConfig) -> ExperimentResult:
    """Run ``cfg.policies`` over the recorded rounds.

    Rewards come from the file. Without explicit ``alpha``/``sigma`` in the
    config the evaluators are fitted in hindsight, and the oracle used for
    relative regret is the one built from that fit.
    """
    link = cfg.link_function
    dataset.check_arms(cfg.K)
    trace = dataset.to_trace(link)
    lo, hi = link.range_bounds()
    if not (np.all(trace.phi > lo) and np.all(trace.phi < hi)):
        raise ReplaySchemaError(f"evaluations must lie strictly inside ({lo}, {hi}) for the {link.kind.value} link")
    if np.any(trace.rewards < 0):
        raise ReplaySchemaError("rewards must be nonnegative")
    if cfg.alpha is not None:
        alpha, sigma = np.asarray(cfg.alpha, float), np.asarray(cfg.sigma, float)
        if alpha.size != dataset.num_evaluators:
            raise ReplaySchemaError(f"config has {alpha.size} evaluators, data has {dataset.num_evaluators}")
    else:
        alpha, sigma = fit_evaluators(trace, link)
    cfg = cfg.replace(J=dataset.num_evaluators, horizon=trace.horizon,
                      K_max=max(int(trace.num_arms.max()), cfg.K + 1), num_runs=1)
    cfg.validate()
    mask = np.arange(trace.rewards.shape[1])[None, :] < trace.num_arms[:, None]
    r = trace.rewards[mask]
    run = run_single(cfg, 0, trace=trace, alpha=alpha, sigma=sigma,
                     reward_scale=max(float(r.max()), 1e-12), reward_mean=float(r.mean()))
    return ExperimentResult(cfg, [run])
