"""Seeded multi-run execution with paired environments."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..metrics import RunTrace, aggregate_ci, estimation_error, growth_exponent, score_selections
from ..model import EvaluatorModel, RewardDistribution, generate_evaluations, sample_num_arms
from ..oracle import compute_oracle_weights
from ..policies import Policy, make_policy
from .config import ExperimentConfig

log = logging.getLogger(__name__)

# stream roles for SeedSequence spawn keys
PARAMS_STREAM = 0
ENV_STREAM = 1
POLICY_STREAM = 2

CSV_HEADER = ("policy", "run", "t", "rel_regret_cum", "abs_regret_cum", "est_error", "gap")


def stream(seed: int, run: int, role: int, index: int = 0) -> np.random.Generator:
    """Independent generator keyed by ``(seed, run, role, index)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(run), int(role), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def policy_stream_index(label: str) -> int:
    # keyed by label so adding or reordering policies leaves the other streams alone
    return zlib.crc32(label.encode("utf-8"))


@dataclass
class EnvironmentTrace:
    """All rounds of one run, padded to ``K_max`` columns.

    ``rewards`` is ``(T, K_max)``, ``phi`` is ``(T, K_max, J)`` and
    ``num_arms[t]`` says how many leading columns of round ``t`` are real.
    """

    rewards: np.ndarray
    phi: np.ndarray
    num_arms: np.ndarray

    @property
    def horizon(self) -> int:
        return self.rewards.shape[0]

    @property
    def num_evaluators(self) -> int:
        return self.phi.shape[2]

    def round(self, t: int):
        k = int(self.num_arms[t])
        return self.rewards[t, :k], self.phi[t, :k]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.num_arms, dtype=np.int64).tobytes())
        for t in range(self.horizon):
            rewards, phi = self.round(t)
            h.update(np.ascontiguousarray(rewards).tobytes())
            h.update(np.ascontiguousarray(phi).tobytes())
        return h.hexdigest()


def draw_parameters(cfg: ExperimentConfig, rng: np.random.Generator):
    if cfg.alpha is not None:
        return np.asarray(cfg.alpha, dtype=float), np.asarray(cfg.sigma, dtype=float)
    alpha = rng.uniform(cfg.alpha0 / 2, 3 * cfg.alpha0 / 2, size=cfg.J)
    sigma = rng.uniform(cfg.sigma0 / 2, 3 * cfg.sigma0 / 2, size=cfg.J)
    return alpha, sigma


def evaluator_model(cfg: ExperimentConfig, alpha, sigma) -> EvaluatorModel:
    return EvaluatorModel(alpha, sigma, cfg.link_function, cfg.noise_kind, cfg.truncation)


def generate_trace(dist: RewardDistribution, model: EvaluatorModel, horizon: int, K: int, K_max: int,
                   variable_arms: bool, rng: np.random.Generator) -> EnvironmentTrace:
    num_arms = sample_num_arms(K, K_max, variable_arms, rng, size=horizon)
    rewards = dist.sample((horizon, K_max), rng)
    phi = generate_evaluations(rewards, model, rng, support_bound=dist.support_bound)
    pad = np.arange(K_max)[None, :] >= num_arms[:, None]
    rewards[pad] = 0.0
    phi[pad] = model.link(0.0)
    return EnvironmentTrace(rewards, phi, num_arms)


def run_policy(policy: Policy, trace: EnvironmentTrace, K: int, rng: np.random.Generator,
               alpha_ref=None, scaled_ref=None):
    """Play ``policy`` through ``trace``. Returns ``(selected (T, K), est_error (T,))``."""
    T = trace.horizon
    selected = np.empty((T, K), dtype=int)
    errors = np.full(T, np.nan)
    target = {"alpha": alpha_ref, "scaled_alpha": scaled_ref}.get(policy.estimate_target or "")
    for t in range(T):
        rewards, phi = trace.round(t)
        sel = policy.select(phi, K, rng)
        if len(sel) != K:
            raise RuntimeError(f"{policy.name} returned {len(sel)} arms instead of {K}")
        policy.update(sel, rewards[sel], phi)
        selected[t] = sel
        if target is not None:
            errors[t] = estimation_error(policy.alpha_estimate, target)
    return selected, errors


def oracle_scores(trace: EnvironmentTrace, w_plus, link) -> np.ndarray:
    pad = np.arange(trace.rewards.shape[1])[None, :] >= trace.num_arms[:, None]
    scores = link.inverse(trace.phi) @ np.asarray(w_plus)
    scores[pad] = -np.inf
    return scores


def run_single(cfg: ExperimentConfig, run: int, trace: EnvironmentTrace | None = None,
               alpha=None, sigma=None, reward_scale: float | None = None,
               reward_mean: float | None = None) -> dict:
    """Execute every configured policy on one run's environment.

    ``trace``, ``alpha``/``sigma`` and the reward scale and mean may be
    supplied (replay); otherwise they come from the config and its seeds.
    """
    dist = cfg.reward_distribution
    if reward_scale is None:
        reward_scale = dist.support_bound
    if reward_mean is None:
        reward_mean = dist.mean
    if alpha is None:
        alpha, sigma = draw_parameters(cfg, stream(cfg.seed, run, PARAMS_STREAM))
    model = evaluator_model(cfg, alpha, sigma)
    if trace is None:
        trace = generate_trace(dist, model, cfg.horizon, cfg.K, cfg.K_max, cfg.variable_arms,
                               stream(cfg.seed, run, ENV_STREAM))
    w_plus = compute_oracle_weights(alpha, sigma, cfg.setting_enum)
    link = cfg.link_function
    scores = oracle_scores(trace, w_plus.w, link)
    traces = []
    for spec in cfg.policies:
        policy = make_policy(spec.kind, sigma=sigma, link=link, horizon=cfg.horizon, w_plus=w_plus.w,
                             reward_scale=reward_scale, delta=cfg.delta, label=spec.name,
                             **spec.params)
        rng = stream(cfg.seed, run, POLICY_STREAM, policy_stream_index(spec.name))
        selected, errors = run_policy(policy, trace, cfg.K, rng, alpha_ref=alpha,
                                      scaled_ref=reward_mean * np.asarray(alpha))
        inc = score_selections(trace.rewards, scores, selected, trace.num_arms)
        traces.append(RunTrace(spec.name, run, inc["rel"], inc["abs"], inc["gap"], errors, selected,
                               inc["oracle_selected"], inc["margin"]))
    return {
        "run": run,
        "alpha": np.asarray(alpha).tolist(),
        "sigma": np.asarray(sigma).tolist(),
        "w_plus": w_plus.w.tolist(),
        "trace_digest": trace.digest(),
        "traces": traces,
        "total_reward": {tr.policy: float(trace.rewards[np.arange(trace.horizon)[:, None], tr.selected].sum())
                         for tr in traces},
    }


def _run_single_star(args):
    return run_single(*args)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[dict]

    def traces(self, policy: str) -> list[RunTrace]:
        out = []
        for run in self.runs:
            out.extend(tr for tr in run["traces"] if tr.policy == policy)
        return out

    @property
    def policy_names(self) -> list[str]:
        return [p.name for p in self.config.policies]

    def summary(self) -> dict:
        out = {}
        for name in self.policy_names:
            trs = self.traces(name)
            finals = [tr.rel_regret_cum[-1] for tr in trs]
            mean_curve = np.mean([tr.rel_regret_cum for tr in trs], axis=0)
            entry = {
                "final_rel_regret_mean": float(np.mean(finals)),
                "final_abs_regret_mean": float(np.mean([tr.abs_regret_cum[-1] for tr in trs])),
                "rel_regret_growth_exponent": growth_exponent(mean_curve),
                "total_reward_mean": float(np.mean([r["total_reward"][name] for r in self.runs])),
            }
            if len(trs) >= 2:
                band = aggregate_ci([tr.rel_regret_cum[-1:] for tr in trs])
                entry["final_rel_regret_ci95"] = float(band.half_width[0])
            errs = [tr.est_error[-1] for tr in trs if np.isfinite(tr.est_error[-1])]
            if errs:
                entry["final_est_error_mean"] = float(np.mean(errs))
            out[name] = entry
        return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    cfg.validate()
    jobs = [(cfg, run) for run in range(cfg.num_runs)]
    if cfg.workers > 1 and cfg.num_runs > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(_run_single_star, jobs))
    else:
        runs = [run_single(*job) for job in jobs]
    runs.sort(key=lambda r: r["run"])
    return ExperimentResult(cfg, runs)


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def traces_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    stride = result.config.record_every
    for name in result.policy_names:
        for tr in result.traces(name):
            rel, absr = tr.rel_regret_cum, tr.abs_regret_cum
            for t in range(stride - 1, tr.horizon, stride):
                writer.writerow((name, tr.run, t + 1, _fmt(rel[t]), _fmt(absr[t]), _fmt(tr.est_error[t]),
                                 _fmt(tr.gap[t])))
            if tr.horizon % stride:
                t = tr.horizon - 1
                writer.writerow((name, tr.run, t + 1, _fmt(rel[t]), _fmt(absr[t]), _fmt(tr.est_error[t]),
                                 _fmt(tr.gap[t])))
    return buf.getvalue()


def metadata(result: ExperimentResult) -> dict:
    cfg = result.config
    return {
        "library": "evalbandit",
        "version": __version__,
        "config": cfg.to_dict(),
        "confidence_interval": {"method": "normal", "level": 0.95, "z": 1.959964},
        "seeds": {"master": cfg.seed, "scheme": "SeedSequence(master, spawn_key=(run, role, index))",
                  "roles": {"params": PARAMS_STREAM, "env": ENV_STREAM, "policy": POLICY_STREAM}},
        "runs": [{"run": r["run"], "alpha": r["alpha"], "sigma": r["sigma"], "w_plus": r["w_plus"],
                  "trace_digest": r["trace_digest"]} for r in result.runs],
        "summary": result.summary(),
    }


def write_outputs(result: ExperimentResult, out_dir: str | Path, stem: str = "experiment") -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"
    csv_path.write_text(traces_csv(result), encoding="utf-8")
    json_path.write_text(json.dumps(metadata(result), indent=2, sort_keys=True, default=_json_default) + "\n",
                         encoding="utf-8")
    log.info("wrote %s and %s", csv_path, json_path)
    return csv_path, json_path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)!r}")
