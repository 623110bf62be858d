"""Experiment configuration: schema, validation, TOML loading and presets."""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from ..model import LinkFunction, LinkKind, NoiseKind, RewardDistribution, Truncation
from ..oracle import Setting
from ..policies import POLICY_NAMES


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every offending field."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration: " + "; ".join(problems))


@dataclass
class PolicySpec:
    kind: str
    label: str | None = None
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.label or self.kind

    @classmethod
    def from_value(cls, value) -> PolicySpec:
        if isinstance(value, PolicySpec):
            return value
        if isinstance(value, str):
            return cls(value)
        value = dict(value)
        kind = value.pop("kind")
        label = value.pop("label", None)
        return cls(kind, label, value)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, **self.params}
        if self.label:
            out["label"] = self.label
        return out


@dataclass
class ExperimentConfig:
    horizon: int = 1000
    K: int = 1
    K_max: int = 20
    variable_arms: bool = False
    J: int = 10
    setting: str = "glm"
    link: str | None = None
    reward: dict = field(default_factory=lambda: {"kind": "truncated_gaussian", "mu": 0.0, "sd": 1.0,
                                                  "lo": 0.0, "hi": 20.0})
    alpha: list[float] | None = None
    sigma: list[float] | None = None
    alpha0: float = 1.0
    sigma0: float = 1.0
    noise: str | None = None
    truncation: str = "range"
    policies: list[PolicySpec] = field(default_factory=list)
    num_runs: int = 1
    seed: int = 0
    delta: float = 0.1
    out_dir: str | None = None
    record_every: int = 1
    workers: int = 1
    preset: str | None = None

    # --- derived views -------------------------------------------------
    @property
    def setting_enum(self) -> Setting:
        return Setting(self.setting)

    @property
    def link_function(self) -> LinkFunction:
        if self.link is not None:
            return LinkFunction.from_name(self.link)
        return LinkFunction(LinkKind.LOGISTIC if self.setting_enum is Setting.GLM else LinkKind.IDENTITY)

    @property
    def noise_kind(self) -> NoiseKind:
        if self.noise is not None:
            return NoiseKind(self.noise)
        return NoiseKind.TRUNCATED_GAUSSIAN if self.setting_enum is Setting.GLM else NoiseKind.GAUSSIAN

    @property
    def reward_distribution(self) -> RewardDistribution:
        return RewardDistribution.from_spec(self.reward)

    def validate(self) -> ExperimentConfig:
        problems = []
        if self.horizon < 1:
            problems.append("horizon: must be >= 1")
        if not 1 <= self.K < self.K_max:
            problems.append("K, K_max: need 1 <= K < K_max")
        if self.J < 1:
            problems.append("J: must be >= 1")
        if self.num_runs < 1:
            problems.append("num_runs: must be >= 1")
        if not 0 < self.delta < 1:
            problems.append("delta: must lie in (0, 1)")
        if self.record_every < 1:
            problems.append("record_every: must be >= 1")
        for name, enum_cls, value in (("setting", Setting, self.setting), ("link", LinkKind, self.link),
                                      ("noise", NoiseKind, self.noise),
                                      ("truncation", Truncation, self.truncation)):
            if value is None:
                continue
            try:
                enum_cls(value)
            except ValueError:
                problems.append(f"{name}: unknown value {value!r}")
        try:
            RewardDistribution.from_spec(self.reward)
        except (TypeError, ValueError) as exc:
            problems.append(f"reward: {exc}")
        for key, vec in (("alpha", self.alpha), ("sigma", self.sigma)):
            if vec is not None and len(vec) != self.J:
                problems.append(f"{key}: expected {self.J} entries, got {len(vec)}")
        if (self.alpha is None) != (self.sigma is None):
            problems.append("alpha, sigma: give both vectors or neither")
        if self.sigma is not None and any(s < 0 for s in self.sigma):
            problems.append("sigma: entries must be nonnegative")
        if self.sigma0 < 0:
            problems.append("sigma0: must be nonnegative")
        labels = set()
        for spec in self.policies:
            if spec.kind not in POLICY_NAMES:
                problems.append(f"policies: unknown policy {spec.kind!r}")
            if spec.name in labels:
                problems.append(f"policies: duplicate label {spec.name!r}")
            labels.add(spec.name)
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["policies"] = [p.to_dict() for p in self.policies]
        return out

    def replace(self, **changes) -> ExperimentConfig:
        cfg = copy.deepcopy(self)
        for key, value in changes.items():
            set_option(cfg, key, value)
        return cfg


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}
# accepted TOML sections, flattened into top-level fields
_SECTIONS = {"evaluators", "environment", "run", "output"}


def config_from_dict(data: dict) -> ExperimentConfig:
    flat: dict[str, Any] = {}
    problems = []
    for key, value in data.items():
        if key in _SECTIONS and isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    unknown = sorted(set(flat) - _FIELDS)
    if unknown:
        problems.extend(f"{k}: unknown key" for k in unknown)
        raise ConfigError(problems)
    base = ExperimentConfig()
    if "preset" in flat and flat["preset"]:
        base = preset(flat["preset"])
    for key, value in flat.items():
        if key == "preset":
            continue
        set_option(base, key, value)
    return base


def load_config(path: str | Path, preset_name: str | None = None) -> ExperimentConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    if preset_name:
        data = {"preset": preset_name, **data}
    return config_from_dict(data)


def set_option(cfg: ExperimentConfig, key: str, value) -> None:
    """Set a (possibly dotted, e.g. ``reward.sd``) option, coercing CLI strings."""
    head, _, rest = key.partition(".")
    if head not in _FIELDS:
        raise ConfigError([f"{key}: unknown key"])
    if rest:
        target = getattr(cfg, head)
        if not isinstance(target, dict):
            raise ConfigError([f"{key}: {head} has no sub-keys"])
        target[rest] = _coerce(value)
        return
    if head == "policies":
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        value = [PolicySpec.from_value(v) for v in value]
    elif head == "reward" and isinstance(value, dict):
        value = dict(value)
    elif head in ("alpha", "sigma"):
        if isinstance(value, str):
            value = value.split(",")
        elif isinstance(value, (int, float)):
            value = [value]
        value = None if value is None else [float(v) for v in value]
    else:
        value = _coerce(value)
        default = getattr(ExperimentConfig(), head)
        if isinstance(default, bool):
            value = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        elif isinstance(default, int) and not isinstance(value, bool) and value is not None:
            value = int(value)
        elif isinstance(default, float) and value is not None:
            value = float(value)
    setattr(cfg, head, value)


def _coerce(value):
    if not isinstance(value, str):
        return value
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


GLM_POLICIES = ["glm-eps-greedy", "glm-eps-greedy-all", "eval-ucb", "linucb", "esag", "glm-greedy",
                "rand", "exp4p"]


def _all_samples(kinds, every):
    # the logistic all-samples learners refit on a stride to keep long horizons tractable
    out = []
    for k in kinds:
        if k in ("glm-eps-greedy-all", "glm-greedy"):
            out.append(PolicySpec(k, params={"resolve_every": every}))
        else:
            out.append(PolicySpec(k))
    return out


def preset(name: str) -> ExperimentConfig:
    """Named configurations mirroring the synthetic study.

    ``fig1a`` parametrizes the oracle-gap sweep; the others are regret runs.
    """
    if name == "fig1a":
        return ExperimentConfig(preset=name, setting="glm", K=1, K_max=20, alpha0=1.0, sigma0=1.0,
                                horizon=500, num_runs=40, policies=[PolicySpec("oracle")])
    if name == "fig1b":
        return ExperimentConfig(preset=name, setting="linear", K=1, K_max=20, J=10, alpha0=1.0,
                                sigma0=10.0, horizon=5000, num_runs=40,
                                policies=[PolicySpec("glm-eps-greedy"), PolicySpec("glm-eps-greedy-all")])
    if name == "fig1c":
        return ExperimentConfig(preset=name, setting="glm", K=1, K_max=20, J=10, alpha0=1.0,
                                sigma0=10.0, horizon=20000, num_runs=40,
                                policies=[PolicySpec("oracle")] + _all_samples(GLM_POLICIES, 10))
    if name == "fig1d":
        return ExperimentConfig(preset=name, setting="linear", K=1, K_max=20, J=10, alpha0=1.0,
                                sigma0=10.0, horizon=20000, num_runs=40,
                                policies=[PolicySpec("oracle")] + _all_samples(GLM_POLICIES, 1))
    if name == "appendix":
        pols = [PolicySpec("glm-eps-greedy", "eps-greedy-t13", {"epsilon_coef": 0.1}),
                PolicySpec("glm-eps-greedy", "eps-greedy-t12", {"epsilon_coef": 0.1, "epsilon_power": -0.5}),
                PolicySpec("glm-eps-greedy-all", "eps-greedy-all-t13",
                           {"epsilon_coef": 0.1, "resolve_every": 10}),
                PolicySpec("glm-eps-greedy-all", "eps-greedy-all-t12",
                           {"epsilon_coef": 0.1, "epsilon_power": -0.5, "resolve_every": 10}),
                PolicySpec("eval-ucb"), PolicySpec("linucb"), PolicySpec("esag"),
                PolicySpec("rand"), PolicySpec("exp4p")]
        return ExperimentConfig(preset=name, setting="glm", K=10, K_max=60, J=10, alpha0=1.0,
                                sigma0=10.0, horizon=5000, num_runs=40,
                                policies=[PolicySpec("oracle")] + pols)
    raise ConfigError([f"preset: unknown preset {name!r}"])


PRESETS = ("fig1a", "fig1b", "fig1c", "fig1d", "appendix")
