"""Allocation of B tasks to n workers.

Contains the proxy loss ``max_i a_i * s_i``, the recursive allocation
selection routine (implemented as a loop), an exhaustive oracle, the two
lower-confidence-bound rules and the allocation policies.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

POLICIES = ("ATA", "ATAEmpirical", "OFTA", "UTA", "GTA")

BRUTE_FORCE_LIMIT = 10**7


def proxy_loss(a, lam) -> float:
    a = np.asarray(a)
    lam = np.asarray(lam, dtype=float)
    if a.shape != lam.shape:
        raise ValueError(f"shape mismatch: allocation {a.shape} vs scores {lam.shape}")
    return float(np.max(a * lam))


def argmax_cardinality(a, s) -> int:
    """Number of arms attaining ``max_i a_i s_i``."""
    prod = np.asarray(a) * np.asarray(s, dtype=float)
    return int(np.count_nonzero(prod == prod.max()))


def ras(scores, B: int) -> np.ndarray:
    """Optimal allocation of ``B`` units for strictly positive ``scores``.

    Adds one unit at a time. Each step considers the arms up to the first
    still-empty one (in ascending score order), keeps those minimising the
    new proxy loss and, among them, the ones minimising the number of arms
    attaining it. Residual ties go to the lowest sorted position; equal
    scores keep their original order.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a non-empty vector")
    if not np.all(s > 0):
        raise ValueError("ras requires strictly positive scores")
    if int(B) != B or B < 1:
        raise ValueError(f"B must be a positive integer, got {B!r}")
    n = s.size
    m = min(int(B), n)
    order = np.argsort(s, kind="stable")[:m]
    ss = s[order].tolist()

    alloc = [0] * m
    top = 0.0  # current proxy loss
    filled = 0  # support is always the prefix [0, filled)
    for _ in range(int(B)):
        r = filled + 1 if filled < m else m
        # Candidates rank by (new loss, growth of the argmax set, position).
        # Staying below ``top`` is unbeatable, so the first such arm wins;
        # otherwise the first arm landing exactly on ``top``; otherwise the
        # smallest new loss.
        best_j = -1
        eq_j = -1
        best_val = math.inf
        for i in range(r):
            cand = (alloc[i] + 1) * ss[i]
            if cand < top:
                best_j = i
                break
            if cand == top:
                if eq_j < 0:
                    eq_j = i
            elif cand < best_val:
                best_val = cand
                best_j = i
        else:
            if eq_j >= 0:
                best_j = eq_j
        alloc[best_j] += 1
        top = max(top, alloc[best_j] * ss[best_j])
        if best_j == filled:
            filled += 1

    out = np.zeros(n, dtype=np.int64)
    out[order] = alloc
    return out


@functools.lru_cache(maxsize=64)
def _compositions(n: int, B: int) -> np.ndarray:
    rows = []
    for combo in itertools.combinations_with_replacement(range(n), B):
        row = [0] * n
        for i in combo:
            row[i] += 1
        rows.append(row)
    arr = np.array(rows, dtype=np.int64)
    arr.flags.writeable = False
    return arr


def n_allocations(n: int, B: int) -> int:
    return math.comb(n + B - 1, B)


def brute_force_opt(scores, B: int):
    """Exhaustive minimiser of the proxy loss over all allocations.

    Returns ``(allocation, loss)``; the allocation has the smallest
    argmax-cardinality among the minimisers (first in lexicographic
    enumeration order on further ties).
    """
    s = np.asarray(scores, dtype=float)
    n = s.size
    if n_allocations(n, B) > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"refusing to enumerate {n_allocations(n, B)} allocations (limit {BRUTE_FORCE_LIMIT})"
        )
    allocs = _compositions(n, int(B))
    prod = allocs * s
    losses = prod.max(axis=1)
    best = losses.min()
    opt = np.flatnonzero(losses == best)
    cards = np.count_nonzero(prod[opt] == best, axis=1)
    pick = opt[np.argmin(cards)]
    return allocs[pick].copy(), float(best)


def brute_force_min_cardinality(scores, B: int) -> int:
    a, _ = brute_force_opt(scores, B)
    return argmax_cardinality(a, scores)


# -- confidence bounds -------------------------------------------------------


def _log_term(round_k):
    return math.log(2.0 * round_k * round_k)


def conf_ata(alpha: float, round_k: int, usage_count: int) -> float:
    """Half-width ``2 alpha (sqrt(L/K) + L/K)`` with ``L = ln(2 k^2)``; inf if K = 0."""
    if round_k < 1:
        raise ValueError("round index starts at 1")
    if usage_count == 0:
        return math.inf
    L = _log_term(round_k)
    return 2.0 * alpha * (math.sqrt(L / usage_count) + L / usage_count)


def _width(round_k, counts):
    # sqrt(L/K) + L/K; entries with K = 0 are computed as if K = 1 and
    # must be masked by the caller.
    L = _log_term(round_k)
    safe = np.where(counts > 0, counts, 1)
    ratio = L / safe
    return np.sqrt(ratio) + ratio


@dataclass(frozen=True)
class AllocatorState:
    """Per-arm usage counts, usage times and empirical means before round ``round_index``."""

    usage_counts: np.ndarray
    usage_times: np.ndarray
    round_index: int = 1
    empirical_means: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        counts = np.asarray(self.usage_counts, dtype=np.int64)
        times = np.asarray(self.usage_times, dtype=float)
        if counts.shape != times.shape:
            raise ValueError("usage_counts and usage_times must have the same shape")
        object.__setattr__(self, "usage_counts", counts)
        object.__setattr__(self, "usage_times", times)
        means = np.divide(times, counts, out=np.zeros_like(times), where=counts > 0)
        object.__setattr__(self, "empirical_means", means)

    @classmethod
    def initial(cls, n: int) -> "AllocatorState":
        return cls(np.zeros(n, dtype=np.int64), np.zeros(n))

    @property
    def n(self):
        return self.usage_counts.size

    def advance(self, a, time_sums) -> "AllocatorState":
        """Fold in one round given per-arm sums of the observed times."""
        a = np.asarray(a, dtype=np.int64)
        return AllocatorState(
            self.usage_counts + a,
            self.usage_times + np.where(a > 0, time_sums, 0.0),
            self.round_index + 1,
        )


def update_state(state: AllocatorState, a, observed_times) -> AllocatorState:
    """Semi-bandit update: ``observed_times[i]`` holds the ``a[i]`` times of arm ``i``."""
    a = np.asarray(a, dtype=np.int64)
    if a.size != state.n or len(observed_times) != state.n:
        raise ValueError("allocation / feedback length does not match the number of arms")
    sums = np.zeros(state.n)
    for i, times in enumerate(observed_times):
        if len(times) != a[i]:
            raise ValueError(f"arm {i}: expected {a[i]} observed times, got {len(times)}")
        if a[i]:
            sums[i] = math.fsum(times)
    return state.advance(a, sums)


def lcb_ata(state: AllocatorState, alpha: float) -> np.ndarray:
    counts = state.usage_counts
    conf = 2.0 * alpha * _width(state.round_index, counts)
    s = np.maximum(state.empirical_means - conf, 0.0)
    s[counts == 0] = 0.0
    return s


def lcb_empirical(state: AllocatorState, eta: float) -> np.ndarray:
    counts = state.usage_counts
    factor = np.maximum(1.0 - 2.0 * eta * _width(state.round_index, counts), 0.0)
    s = state.empirical_means * factor
    s[counts == 0] = 0.0
    return s


# -- policies ----------------------------------------------------------------


@dataclass(frozen=True)
class Policy:
    kind: str
    alpha: float | None = None
    eta: float | None = None

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown policy {self.kind!r}; choose from {POLICIES}")
        if self.kind == "ATA" and not (self.alpha is not None and self.alpha > 0):
            raise ValueError("ATA requires alpha > 0")
        if self.kind == "ATAEmpirical" and not (self.eta is not None and self.eta > 0):
            raise ValueError("ATAEmpirical requires eta > 0")

    @property
    def learns(self):
        return self.kind in ("ATA", "ATAEmpirical")

    def scores(self, state: AllocatorState) -> np.ndarray:
        if self.kind == "ATA":
            return lcb_ata(state, self.alpha)
        if self.kind == "ATAEmpirical":
            return lcb_empirical(state, self.eta)
        raise ValueError(f"{self.kind} does not use confidence bounds")

    def label(self):
        if self.kind == "ATA":
            return f"ATA(alpha={self.alpha:g})"
        if self.kind == "ATAEmpirical":
            return f"ATAEmpirical(eta={self.eta:g})"
        return self.kind


def spread_over(arms, B: int, round_k: int, n: int) -> np.ndarray:
    """Split ``B`` evenly over ``arms``; the remainder rotates with the round."""
    arms = np.asarray(arms)
    z = arms.size
    a = np.zeros(n, dtype=np.int64)
    q, rem = divmod(int(B), z)
    a[arms] = q
    if rem:
        start = ((round_k - 1) * rem) % z
        a[arms[(start + np.arange(rem)) % z]] += 1
    return a


@functools.lru_cache(maxsize=256)
def _oracle_allocation(means_key: bytes, B: int) -> np.ndarray:
    out = ras(np.frombuffer(means_key), B)
    out.flags.writeable = False
    return out


def optimal_allocation(means, B: int) -> np.ndarray:
    """RAS on the true means; cached per (means, B)."""
    return _oracle_allocation(np.ascontiguousarray(means, dtype=float).tobytes(), int(B))


def choose_allocation(policy: Policy, state: AllocatorState, fleet, B: int, rng=None) -> np.ndarray:
    n = fleet.n
    if policy.kind == "GTA":
        raise ValueError("GTA is event driven; use simulator.run_greedy_round")
    if policy.kind == "OFTA":
        return optimal_allocation(fleet.means, B).copy()
    if policy.kind == "UTA":
        if n > B:
            a = np.zeros(n, dtype=np.int64)
            a[rng.choice(n, size=B, replace=False)] = 1
            return a
        q, rem = divmod(int(B), n)
        a = np.full(n, q, dtype=np.int64)
        if rem:
            a[rng.choice(n, size=rem, replace=False)] += 1
        return a
    s = policy.scores(state)
    zero = np.flatnonzero(s == 0.0)
    if zero.size:
        return spread_over(zero, B, state.round_index, n)
    return ras(s, B)


# -- regret ------------------------------------------------------------------


def k_gap(ell_bar: float, a_bar_i: int, mu_i: float) -> int:
    """Smallest ``k >= 1`` with ``(a_bar_i + k) mu_i > ell_bar``; always 1 or 2 for RAS output."""
    if not mu_i > 0:
        raise ValueError("mu_i must be positive")
    k = 1
    while (a_bar_i + k) * mu_i <= ell_bar:
        k += 1
    if k > 2:
        raise AssertionError(
            f"k_gap={k} for a_bar_i={a_bar_i}, mu_i={mu_i}, ell_bar={ell_bar}: allocation is not RAS-optimal"
        )
    return k


def cumulative_regret(history, fleet, B: int) -> float:
    means = fleet.means
    ell_bar = proxy_loss(optimal_allocation(means, B), means)
    total = math.fsum(proxy_loss(a, means) for a in history)
    return total - len(history) * ell_bar

