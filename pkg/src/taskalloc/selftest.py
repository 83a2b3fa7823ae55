"""Quick property checks runnable from the command line (``taskalloc selftest``)."""
from __future__ import annotations

import math

import numpy as np

from .allocation import (
    AllocatorState,
    argmax_cardinality,
    brute_force_opt,
    k_gap,
    lcb_ata,
    lcb_empirical,
    proxy_loss,
    ras,
)
from .distributions import FleetSpec


def random_instance(rng, max_n=6, max_B=6):
    n = int(rng.integers(1, max_n + 1))
    B = int(rng.integers(1, max_B + 1))
    # uniform on (0, 10]
    s = 10.0 * (1.0 - rng.random(n))
    return s, B


def check_ras(instances: int = 10_000, seed: int = 0):
    """Counts of disagreements between RAS and exhaustive search.

    Returns a dict with ``loss``, ``cardinality``, ``pairwise`` and
    ``k_gap`` violation counts (all zero when everything holds).
    """
    rng = np.random.default_rng(seed)
    bad = {"loss": 0, "cardinality": 0, "pairwise": 0, "k_gap": 0}
    for _ in range(instances):
        s, B = random_instance(rng)
        a = ras(s, B)
        best, loss = brute_force_opt(s, B)
        if proxy_loss(a, s) != loss:
            bad["loss"] += 1
        if argmax_cardinality(a, s) != argmax_cardinality(best, s):
            bad["cardinality"] += 1
        prods = a * s
        if np.any(prods[None, :] > ((a + 1) * s)[:, None]):
            bad["pairwise"] += 1
        for i in range(len(s)):
            try:
                k_gap(loss, a[i], s[i])
            except AssertionError:
                bad["k_gap"] += 1
    return bad


def coverage_failure_rate(arm, which: str, k: int = 10, count: int = 10, trials: int = 10_000, seed: int = 0):
    """Fraction of trials in which the lower bound exceeds the true mean.

    Each trial draws ``count`` samples of ``arm`` and evaluates the bound
    as it would be at round ``k``. ``which`` is ``"ata"`` (width from the
    arm's own Orlicz bound) or ``"empirical"`` (``eta = bound / mean``).
    """
    rng = np.random.default_rng(seed)
    fleet = FleetSpec([arm] * trials)
    times, owner = fleet.draw(np.full(trials, count), rng)
    sums = np.bincount(owner, weights=times, minlength=trials)
    state = AllocatorState(np.full(trials, count), sums, round_index=k)
    if which == "ata":
        lcb = lcb_ata(state, arm.orlicz_bound)
    elif which == "empirical":
        lcb = lcb_empirical(state, arm.orlicz_bound / arm.mean)
    else:
        raise ValueError(f"unknown bound {which!r}")
    return float(np.mean(lcb > arm.mean))


def run_selftest(instances: int = 10_000, seed: int = 0, out=print) -> bool:
    from .distributions import ArmModel, deterministic, shifted_exp

    ok = True
    bad = check_ras(instances, seed)
    for name, count in bad.items():
        status = "PASS" if count == 0 else "FAIL"
        ok &= count == 0
        out(f"{status}  ras {name}: {count} violations in {instances} instances")
    m = 29.0
    arms = {
        "ShiftedExp": shifted_exp(m, m),
        "Uniform": ArmModel("Uniform", {"low": m / 2, "high": 1.5 * m}, offset=m),
        "HalfNormal": ArmModel("HalfNormal", {"sigma": m * math.sqrt(math.pi / 2)}, offset=m),
        "Lognormal": ArmModel("Lognormal", {"mu": math.log(m) / 2, "sigma": math.sqrt(math.log(m))}, offset=m),
        "Gamma": ArmModel("Gamma", {"shape": m * m, "scale": 1 / m}, offset=m),
        "Deterministic": deterministic(2 * m),
    }
    for kind, arm in arms.items():
        for which in ("ata", "empirical"):
            rate = coverage_failure_rate(arm, which, seed=seed)
            status = "PASS" if rate <= 0.02 else "FAIL"
            ok &= rate <= 0.02
            out(f"{status}  coverage {which:<9} {kind:<13} miss rate {rate:.4f} (limit 0.02)")
    return ok
