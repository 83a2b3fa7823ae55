"""Worker computation-time distributions.

Every arm is ``offset + base`` where ``base`` is one of a few standard
families. Means are exact; ``orlicz_bound`` is an upper bound on the
centered sub-exponential norm ``||X - mu||_psi1``.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate, optimize

KINDS = {
    "ShiftedExp": ("scale",),
    "Uniform": ("low", "high"),
    "HalfNormal": ("sigma",),
    "Lognormal": ("mu", "sigma"),
    "Gamma": ("shape", "scale"),
    "Deterministic": ("value",),
}

FAMILIES = ("SqrtExp", "LinearExp", "HeterogeneousGroups", "ExpOnly", "Custom")

# Base constant of the standard fleets: nu_i = 29 sqrt(i) + Exp(29 sqrt(i)).
DEFAULT_C = 29.0


def centered_psi1(logpdf, mean, lo=0.0, hi=np.inf):
    """Numerically solve ``E exp(|X - mean| / C) = 2`` for ``C``.

    ``logpdf`` is the log-density of ``X`` on ``[lo, hi]``. Only suitable for
    light-tailed, moderately scaled densities.
    """

    def excess(c):
        def integrand(x):
            return math.exp(abs(x - mean) / c + logpdf(x))

        # quad reports divergence only through warnings; treat them as +inf.
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                left, _ = integrate.quad(integrand, lo, mean, limit=200)
                right, _ = integrate.quad(integrand, mean, hi, limit=200)
            except integrate.IntegrationWarning:
                return math.inf
        return left + right - 2.0

    f = _safe(excess)
    # E exp(|Y|/C) decreases in C; bracket the root.
    c_hi = 1.0
    while f(c_hi) > 0:
        c_hi *= 2.0
    c_lo = c_hi
    while f(c_lo) <= 0:
        c_lo /= 2.0
    return optimize.brentq(f, c_lo, c_hi, xtol=1e-12)


def _safe(fn):
    def wrapped(c):
        try:
            val = fn(c)
        except OverflowError:
            return 1e300
        return min(val, 1e300)

    return wrapped


@functools.lru_cache(maxsize=None)
def _exp_psi1_unit():
    # ||E - 1||_psi1 for E ~ Exp(1); the expectation has a closed form.
    def excess(c):
        u = 1.0 / c
        return (math.exp(u) - math.exp(-1.0)) / (1.0 + u) + math.exp(-1.0) / (1.0 - u) - 2.0

    return optimize.brentq(excess, 1.0 + 1e-9, 50.0, xtol=1e-14)


@functools.lru_cache(maxsize=None)
def _uniform_psi1_unit():
    # |U - mid| is uniform on [0, 1] for half-width 1: E exp(V/C) = C (e^{1/C} - 1).
    t = optimize.brentq(lambda t: math.expm1(t) / t - 2.0, 1e-9, 10.0, xtol=1e-14)
    return 1.0 / t


@functools.lru_cache(maxsize=None)
def _half_normal_psi1_unit():
    m = math.sqrt(2.0 / math.pi)
    logc = 0.5 * math.log(2.0 / math.pi)
    return centered_psi1(lambda x: logc - 0.5 * x * x, m)


@dataclass(frozen=True)
class ArmModel:
    """One worker: ``offset + base(kind, params)``.

    ``mean`` and ``orlicz_bound`` are derived at construction; invalid
    parameters raise ``ValueError`` here rather than at sample time.
    """

    kind: str
    params: Mapping[str, float]
    offset: float = 0.0
    mean: float = field(init=False)
    orlicz_bound: float = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        expected = set(KINDS[self.kind])
        if set(self.params) != expected:
            raise ValueError(
                f"{self.kind} takes parameters {sorted(expected)}, got {sorted(self.params)}"
            )
        params = {k: float(v) for k, v in self.params.items()}
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "offset", float(self.offset))
        if not self.offset >= 0:
            raise ValueError("offset must be nonnegative")
        _validate(self.kind, params)
        mean = self.offset + _base_mean(self.kind, params)
        if not mean > 0:
            raise ValueError(f"{self.kind} arm has nonpositive mean {mean}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "orlicz_bound", _orlicz(self.kind, params, mean))

    def to_dict(self):
        return {"kind": self.kind, "offset": self.offset, **self.params}


def _validate(kind, p):
    if kind == "ShiftedExp":
        ok = p["scale"] > 0
    elif kind == "Uniform":
        ok = 0 <= p["low"] < p["high"]
    elif kind == "HalfNormal":
        ok = p["sigma"] > 0
    elif kind == "Lognormal":
        ok = p["sigma"] > 0 and math.isfinite(p["mu"])
    elif kind == "Gamma":
        ok = p["shape"] > 0 and p["scale"] > 0
    else:
        ok = p["value"] >= 0
    if not ok:
        raise ValueError(f"invalid {kind} parameters {p}")


def _base_mean(kind, p):
    if kind == "ShiftedExp":
        return p["scale"]
    if kind == "Uniform":
        return 0.5 * (p["low"] + p["high"])
    if kind == "HalfNormal":
        return p["sigma"] * math.sqrt(2.0 / math.pi)
    if kind == "Lognormal":
        return math.exp(p["mu"] + 0.5 * p["sigma"] ** 2)
    if kind == "Gamma":
        return p["shape"] * p["scale"]
    return p["value"]


def _orlicz(kind, p, mean):
    if kind == "Deterministic":
        return 0.0
    if kind == "ShiftedExp":
        return _exp_psi1_unit() * p["scale"]
    if kind == "Uniform":
        return _uniform_psi1_unit() * 0.5 * (p["high"] - p["low"])
    if kind == "HalfNormal":
        return _half_normal_psi1_unit() * p["sigma"]
    # Gamma: no usable closed form at the huge shapes used in the grouped
    # fleet. Lognormal is not sub-exponential at all. Both get 2 * mean.
    return 2.0 * mean


def shifted_exp(shift, scale):
    return ArmModel("ShiftedExp", {"scale": scale}, offset=shift)


def exponential(scale):
    return ArmModel("ShiftedExp", {"scale": scale})


def deterministic(value):
    return ArmModel("Deterministic", {"value": value})


def arm_from_dict(spec):
    spec = dict(spec)
    try:
        kind = spec.pop("kind")
    except KeyError:
        raise ValueError("arm spec needs a 'kind'") from None
    offset = spec.pop("offset", spec.pop("shift", 0.0))
    return ArmModel(kind, spec, offset=offset)


# Vectorised base samplers. ``idx`` selects per-task parameters.
def _draw_base(kind, rng, params, idx):
    m = idx.size
    if kind == "ShiftedExp":
        return rng.standard_exponential(m) * params["scale"][idx]
    if kind == "Uniform":
        lo = params["low"][idx]
        return lo + rng.random(m) * (params["high"][idx] - lo)
    if kind == "HalfNormal":
        return np.abs(rng.standard_normal(m)) * params["sigma"][idx]
    if kind == "Lognormal":
        return np.exp(params["mu"][idx] + params["sigma"][idx] * rng.standard_normal(m))
    if kind == "Gamma":
        return rng.standard_gamma(params["shape"][idx]) * params["scale"][idx]
    return params["value"][idx].astype(float, copy=True)


def sample(arm: ArmModel, rng: np.random.Generator, size=None):
    """Draw from one arm. Returns a float when ``size`` is None."""
    m = 1 if size is None else int(size)
    params = {k: np.array([v]) for k, v in arm.params.items()}
    out = arm.offset + _draw_base(arm.kind, rng, params, np.zeros(m, dtype=np.intp))
    return float(out[0]) if size is None else out


class FleetSpec:
    """Ordered collection of arms with vectorised batch sampling."""

    def __init__(self, arms: Sequence[ArmModel]):
        arms = tuple(arms)
        if not arms:
            raise ValueError("a fleet needs at least one arm")
        self.arms = arms
        self.n = len(arms)
        self.means = np.array([a.mean for a in arms])
        self.orlicz_bounds = np.array([a.orlicz_bound for a in arms])
        self.eta = float(np.max(self.orlicz_bounds / self.means))
        self._offsets = np.array([a.offset for a in arms])
        self._index = np.arange(self.n)
        self._groups = []
        for kind, names in KINDS.items():
            mask = np.array([a.kind == kind for a in arms])
            if not mask.any():
                continue
            params = {
                name: np.array([a.params[name] if a.kind == kind else np.nan for a in arms])
                for name in names
            }
            self._groups.append((kind, mask, params))

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"FleetSpec(n={self.n}, eta={self.eta:.4g})"

    def draw(self, counts, rng):
        """Draw ``counts[i]`` times for every arm ``i``.

        Returns ``(times, owner)``: a flat array of task times grouped by arm
        in index order, and the arm index of every entry.
        """
        owner = np.repeat(self._index, counts)
        if len(self._groups) == 1:
            kind, _, params = self._groups[0]
            times = _draw_base(kind, rng, params, owner)
        else:
            times = np.empty(owner.size)
            for kind, mask, params in self._groups:
                sel = mask[owner]
                times[sel] = _draw_base(kind, rng, params, owner[sel])
        times += self._offsets[owner]
        return times, owner


def make_fleet(family: str, n: int, c: float = DEFAULT_C, arms=None) -> FleetSpec:
    """Build one of the standard fleets.

    SqrtExp:  ``c sqrt(i) + Exp(c sqrt(i))``, mean ``2 c sqrt(i)``
    LinearExp: ``c i + Exp(c i)``, mean ``2 c i``
    ExpOnly:  ``Exp(2 i)``
    HeterogeneousGroups: groups of five (Exp, Uniform, HalfNormal,
    Lognormal, Gamma) with group mean ``m = c (5g + 1)``, each shifted by ``m``.
    Custom: explicit list of arm dicts (see ``arm_from_dict``).
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    if family == "Custom":
        if not arms:
            raise ValueError("Custom family needs an 'arms' list")
        built = [a if isinstance(a, ArmModel) else arm_from_dict(a) for a in arms]
        if n is not None and n != len(built):
            raise ValueError(f"n={n} but {len(built)} arms were given")
        return FleetSpec(built)
    if n is None or int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    idx = np.arange(1, n + 1)
    if family == "SqrtExp":
        return FleetSpec([shifted_exp(c * math.sqrt(i), c * math.sqrt(i)) for i in idx])
    if family == "LinearExp":
        return FleetSpec([shifted_exp(c * i, c * i) for i in idx])
    if family == "ExpOnly":
        return FleetSpec([exponential(2.0 * i) for i in idx])
    if n % 5:
        raise ValueError(f"HeterogeneousGroups needs n divisible by 5, got {n}")
    out = []
    for g in range(n // 5):
        m = c * (5 * g + 1)
        out += [
            ArmModel("ShiftedExp", {"scale": m}, offset=m),
            ArmModel("Uniform", {"low": m / 2, "high": 3 * m / 2}, offset=m),
            ArmModel("HalfNormal", {"sigma": m * math.sqrt(math.pi / 2)}, offset=m),
            ArmModel("Lognormal", {"mu": math.log(m) / 2, "sigma": math.sqrt(math.log(m))}, offset=m),
            ArmModel("Gamma", {"shape": m**2, "scale": 1.0 / m}, offset=m),
        ]
    return FleetSpec(out)
