"""Virtual-time round engine.

A replication is strictly sequential. Randomness comes from independent
PCG64 streams derived from ``(seed, purpose)`` so that, for example, the
gradient noise of a run does not depend on how many task times the
allocation policy happened to draw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .allocation import (
    AllocatorState,
    Policy,
    choose_allocation,
    optimal_allocation,
    proxy_loss,
)
from .optimizer import minibatch_grad, GradientOracle, suboptimality

STREAMS = ("times", "policy", "grad", "prior")


def make_streams(seed: int) -> dict:
    """One ``np.random.Generator`` per purpose, keyed on ``(seed, purpose index)``."""
    return {
        name: np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), i])))
        for i, name in enumerate(STREAMS)
    }


@dataclass
class RoundRecord:
    round: int
    round_time: float
    cum_runtime: float
    worker_time_increment: float
    cum_worker_time: float
    proxy_loss: float
    cum_regret: float
    suboptimality: float = math.nan
    allocation: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass
class StaticRound:
    round_time: float
    worker_time: float
    counts: np.ndarray
    times: np.ndarray  # flat, grouped by arm
    owner: np.ndarray
    sums: np.ndarray  # per-arm total busy time

    def per_arm(self):
        return np.split(self.times, np.cumsum(self.counts)[:-1])


@dataclass
class GreedyTrace:
    completion_events: list  # (worker, virtual time), sorted by time then worker
    durations: np.ndarray  # duration of each completed task, aligned with events
    tasks_completed: int
    tasks_started: int

    @property
    def tasks_abandoned(self):
        return self.tasks_started - self.tasks_completed


@dataclass
class GreedyRound:
    round_time: float
    worker_time: float
    counts: np.ndarray  # completed tasks per worker
    trace: GreedyTrace


def run_static_round(a, fleet, rng) -> StaticRound:
    a = np.asarray(a, dtype=np.int64)
    times, owner = fleet.draw(a, rng)
    sums = np.bincount(owner, weights=times, minlength=fleet.n)
    return StaticRound(
        round_time=float(sums.max()) if times.size else 0.0,
        worker_time=float(times.sum()),
        counts=a,
        times=times,
        owner=owner,
        sums=sums,
    )


def run_greedy_round(fleet, B: int, rng) -> GreedyRound:
    """All workers busy from time 0; the round ends at the B-th completion.

    Only workers whose first completion is no later than the B-th smallest
    first completion can finish anything before the round ends, and none
    of them can finish more than B tasks, so B draws per such worker give
    the exact event sequence.
    """
    n = fleet.n
    first, _ = fleet.draw(np.ones(n, dtype=np.int64), rng)
    m = min(B, n)
    cutoff = np.partition(first, m - 1)[m - 1]
    cand = np.flatnonzero(first <= cutoff)
    if B > 1:
        extra = np.zeros(n, dtype=np.int64)
        extra[cand] = B - 1
        more, _ = fleet.draw(extra, rng)
        durations = np.column_stack([first[cand], more.reshape(cand.size, B - 1)])
    else:
        durations = first[cand][:, None]
    finish = np.cumsum(durations, axis=1)
    workers = np.repeat(cand, durations.shape[1])
    flat_finish = finish.ravel()
    order = np.lexsort((workers, flat_finish))[:B]
    ev_workers = workers[order]
    ev_times = flat_finish[order]
    t_B = float(ev_times[-1])
    counts = np.bincount(ev_workers, minlength=n)
    trace = GreedyTrace(
        completion_events=list(zip(ev_workers.tolist(), ev_times.tolist())),
        durations=durations.ravel()[order],
        tasks_completed=B,
        tasks_started=n + B - 1,
    )
    return GreedyRound(round_time=t_B, worker_time=n * t_B, counts=counts, trace=trace)


def warm_start(state: AllocatorState, fleet, policy: Policy, P: int, B: int, rng) -> AllocatorState:
    """Run ``P`` allocation-and-feedback rounds with no optimiser attached."""
    if policy.kind == "GTA":
        raise ValueError("warm start needs a static allocation policy")
    for _ in range(int(P)):
        a = choose_allocation(policy, state, fleet, B, rng)
        times, owner = fleet.draw(a, rng)
        state = state.advance(a, np.bincount(owner, weights=times, minlength=fleet.n))
    return state


def rounds_to_optimal(policy: Policy, fleet, B: int, rng, state=None, max_rounds=10**7):
    """Number of rounds until the policy first plays the oracle allocation.

    Returns ``(rounds, state)``; ``rounds`` is ``None`` if ``max_rounds``
    elapse first.
    """
    target = optimal_allocation(fleet.means, B)
    state = AllocatorState.initial(fleet.n) if state is None else state
    for k in range(1, int(max_rounds) + 1):
        a = choose_allocation(policy, state, fleet, B, rng)
        if np.array_equal(a, target):
            return k, state
        times, owner = fleet.draw(a, rng)
        state = state.advance(a, np.bincount(owner, weights=times, minlength=fleet.n))
    return None, state


def run_experiment(config, seed: int, keep_allocations: bool = False) -> Iterator[RoundRecord]:
    """Yield one ``RoundRecord`` per round; deterministic given ``(config, seed)``.

    Stops after ``config.K`` rounds, or earlier once the suboptimality drops
    below ``config.threshold``.
    """
    streams = make_streams(seed)
    fleet = config.fleet()
    policy = config.policy
    B = config.B
    means = fleet.means
    ell_bar = proxy_loss(optimal_allocation(means, B), means)

    state = AllocatorState.initial(fleet.n)
    if config.warm_start_P and policy.learns:
        state = warm_start(state, fleet, policy, config.warm_start_P, B, streams["prior"])

    opt = config.optimizer
    if opt.enabled:
        problem = opt.problem()
        oracle = GradientOracle(opt.sigma)
        gamma = opt.step_size(problem)
        x = np.zeros(problem.d)

    cum_runtime = cum_worker = cum_regret = 0.0
    for k in range(1, config.K + 1):
        if policy.kind == "GTA":
            rnd = run_greedy_round(fleet, B, streams["times"])
        else:
            a = choose_allocation(policy, state, fleet, B, streams["policy"])
            rnd = run_static_round(a, fleet, streams["times"])
            if policy.learns:
                state = state.advance(a, rnd.sums)
        loss = proxy_loss(rnd.counts, means)
        cum_runtime += rnd.round_time
        cum_worker += rnd.worker_time
        cum_regret += loss - ell_bar
        sub = math.nan
        if opt.enabled:
            x = x - gamma * minibatch_grad(problem, oracle, x, B, streams["grad"])
            sub = suboptimality(problem, x)
        yield RoundRecord(
            round=k,
            round_time=rnd.round_time,
            cum_runtime=cum_runtime,
            worker_time_increment=rnd.worker_time,
            cum_worker_time=cum_worker,
            proxy_loss=loss,
            cum_regret=cum_regret,
            suboptimality=sub,
            allocation=rnd.counts if keep_allocations else None,
        )
        if config.threshold is not None and sub < config.threshold:
            return
