"""Experiment configuration: YAML (or JSON) file -> validated ``ExperimentConfig``.

Example::

    name: sqrt-n17-ata
    n: 17
    B: 23
    K: 200000                 # maximum number of rounds
    policy: {kind: ATA, alpha: 478.3}
    family: SqrtExp           # or {kind: SqrtExp, c: 29}, {kind: Custom, arms: [...]}
    seeds: [1, 2, 3, 4, 5]
    optimizer: {enabled: true, d: 100, gamma: null, sigma: 0.01}
    warm_start_P: 0
    stop: {threshold: 1.0e-5} # stop a run once f(x) - f* drops below this
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .allocation import Policy
from .distributions import DEFAULT_C, FAMILIES, make_fleet
from .optimizer import QuadraticProblem, default_step

DEFAULT_SEEDS = (1, 2, 3, 4, 5)

_TOP_KEYS = {"name", "n", "B", "K", "policy", "family", "seeds", "optimizer", "warm_start_P", "stop"}
_OPT_KEYS = {"enabled", "d", "gamma", "sigma"}
_STOP_KEYS = {"threshold", "max_rounds"}
_FAMILY_KEYS = {"kind", "c", "arms"}
_POLICY_KEYS = {"kind", "alpha", "eta"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    enabled: bool = True
    d: int = 100
    gamma: float | None = None  # None -> 1 / lambda_max(A)
    sigma: float = 0.01

    def problem(self):
        return QuadraticProblem(self.d)

    def step_size(self, problem=None):
        if self.gamma is not None:
            return self.gamma
        return default_step(problem or self.problem())


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    B: int
    policy: Policy
    family: str
    K: int = 10_000
    name: str = "experiment"
    c: float = DEFAULT_C
    arms: tuple | None = None
    seeds: tuple = DEFAULT_SEEDS
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    warm_start_P: int = 0
    threshold: float | None = None

    def fleet(self):
        return make_fleet(self.family, self.n, c=self.c, arms=self.arms)

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        pol = {"kind": self.policy.kind}
        if self.policy.alpha is not None:
            pol["alpha"] = self.policy.alpha
        if self.policy.eta is not None:
            pol["eta"] = self.policy.eta
        fam = {"kind": self.family, "c": self.c}
        if self.arms is not None:
            fam["arms"] = [dict(a) for a in self.arms]
        out = {
            "name": self.name,
            "n": self.n,
            "B": self.B,
            "K": self.K,
            "policy": pol,
            "family": fam,
            "seeds": list(self.seeds),
            "optimizer": {
                "enabled": self.optimizer.enabled,
                "d": self.optimizer.d,
                "gamma": self.optimizer.gamma,
                "sigma": self.optimizer.sigma,
            },
            "warm_start_P": self.warm_start_P,
            "stop": {"threshold": self.threshold},
        }
        return out


def _unknown(where, given, allowed):
    extra = sorted(set(given) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {extra}; allowed {sorted(allowed)}")


def _pos_int(where, value):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{where}: must be a positive integer, got {value!r}")
    return value


def _nonneg_int(where, value):
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(f"{where}: must be a nonnegative integer, got {value!r}")
    return value


def _number(where, value, positive=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: must be a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{where}: must be > 0, got {value!r}")
    return float(value)


def config_from_dict(raw: dict, name: str = "experiment") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _unknown("config", raw, _TOP_KEYS)
    for key in ("n", "B", "policy", "family"):
        if key not in raw:
            raise ConfigError(f"{key}: required")

    n = _pos_int("n", raw["n"])
    B = _pos_int("B", raw["B"])
    K = _pos_int("K", raw.get("K", 10_000))

    pol = raw["policy"]
    if isinstance(pol, str):
        pol = {"kind": pol}
    if not isinstance(pol, dict):
        raise ConfigError("policy: must be a name or a mapping")
    _unknown("policy", pol, _POLICY_KEYS)
    kind = pol.get("kind")
    alpha = _number("policy.alpha", pol.get("alpha"), positive=True, allow_none=True)
    eta = _number("policy.eta", pol.get("eta"), positive=True, allow_none=True)
    if kind == "ATA" and alpha is None:
        raise ConfigError("policy.alpha: required for ATA")
    if kind == "ATAEmpirical" and eta is None:
        raise ConfigError("policy.eta: required for ATAEmpirical")
    try:
        policy = Policy(kind, alpha=alpha, eta=eta)
    except ValueError as exc:
        raise ConfigError(f"policy.kind: {exc}") from None

    fam = raw["family"]
    if isinstance(fam, str):
        fam = {"kind": fam}
    if not isinstance(fam, dict):
        raise ConfigError("family: must be a name or a mapping")
    _unknown("family", fam, _FAMILY_KEYS)
    family = fam.get("kind")
    if family not in FAMILIES:
        raise ConfigError(f"family.kind: unknown family {family!r}; choose from {list(FAMILIES)}")
    c = _number("family.c", fam.get("c", DEFAULT_C), positive=True)
    arms = fam.get("arms")
    if arms is not None:
        if family != "Custom":
            raise ConfigError("family.arms: only valid for the Custom family")
        arms = tuple(dict(a) for a in arms)

    seeds = raw.get("seeds", list(DEFAULT_SEEDS))
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds: must be a non-empty list of integers")
    for s in seeds:
        _nonneg_int("seeds[]", s)

    opt = raw.get("optimizer", {}) or {}
    if not isinstance(opt, dict):
        raise ConfigError("optimizer: must be a mapping")
    _unknown("optimizer", opt, _OPT_KEYS)
    enabled = opt.get("enabled", True)
    if not isinstance(enabled, bool):
        raise ConfigError("optimizer.enabled: must be true or false")
    optimizer = OptimizerConfig(
        enabled=enabled,
        d=_pos_int("optimizer.d", opt.get("d", 100)),
        gamma=_number("optimizer.gamma", opt.get("gamma"), positive=True, allow_none=True),
        sigma=_number("optimizer.sigma", opt.get("sigma", 0.01)),
    )
    if optimizer.sigma < 0:
        raise ConfigError("optimizer.sigma: must be >= 0")

    P = _nonneg_int("warm_start_P", raw.get("warm_start_P", 0))
    if P and not policy.learns:
        raise ConfigError("warm_start_P: only meaningful for ATA / ATAEmpirical")

    stop = raw.get("stop", {}) or {}
    if not isinstance(stop, dict):
        raise ConfigError("stop: must be a mapping")
    _unknown("stop", stop, _STOP_KEYS)
    threshold = _number("stop.threshold", stop.get("threshold"), positive=True, allow_none=True)
    if "max_rounds" in stop:
        K = _pos_int("stop.max_rounds", stop["max_rounds"])
    if threshold is not None and not optimizer.enabled:
        raise ConfigError("stop.threshold: needs the optimizer enabled")

    cfg = ExperimentConfig(
        n=n,
        B=B,
        K=K,
        policy=policy,
        family=family,
        name=str(raw.get("name", name)),
        c=c,
        arms=arms,
        seeds=tuple(seeds),
        optimizer=optimizer,
        warm_start_P=P,
        threshold=threshold,
    )
    try:
        cfg.fleet()
    except ValueError as exc:
        raise ConfigError(f"family: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    try:
        return config_from_dict(raw, name=path.stem)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"{directory}: not a directory")
    files = sorted(
        p for p in directory.iterdir() if p.suffix in (".yaml", ".yml", ".json") and p.is_file()
    )
    if not files:
        raise ConfigError(f"{directory}: no .yaml/.yml/.json config files")
    return files


def dump_config(cfg: ExperimentConfig, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    os.replace(tmp, path)
