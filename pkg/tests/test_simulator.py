import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taskalloc.allocation import AllocatorState, Policy, optimal_allocation, proxy_loss
from taskalloc.config import config_from_dict
from taskalloc.distributions import FleetSpec, deterministic, make_fleet
from taskalloc.simulator import (
    make_streams,
    rounds_to_optimal,
    run_experiment,
    run_greedy_round,
    run_static_round,
    warm_start,
)


def det_fleet(*means):
    return FleetSpec([deterministic(m) for m in means])


def cfg(**kw):
    raw = dict(n=5, B=3, K=50, policy="OFTA", family="SqrtExp", optimizer={"enabled": False})
    raw.update(kw)
    return config_from_dict(raw)


# -- static rounds ---------------------------------------------------------------


def test_static_round_deterministic_example():
    rnd = run_static_round([2, 1], det_fleet(1.0, 2.0), np.random.default_rng(0))
    assert rnd.round_time == 2.0
    assert rnd.worker_time == 4.0
    assert [t.tolist() for t in rnd.per_arm()] == [[1.0, 1.0], [2.0]]


def test_static_round_single_arm_support():
    rnd = run_static_round([5, 0], det_fleet(3.0, 1.0), np.random.default_rng(0))
    assert rnd.round_time == 15.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 23), st.integers(0, 2**32 - 1))
def test_static_round_time_is_max_of_sums(n, B, seed):
    rng = np.random.default_rng(seed)
    fleet = make_fleet("SqrtExp", n)
    a = np.bincount(rng.integers(0, n, size=B), minlength=n)
    rnd = run_static_round(a, fleet, rng)
    sums = [t.sum() for t, ai in zip(rnd.per_arm(), a) if ai > 0]
    assert rnd.round_time == pytest.approx(max(sums))
    assert rnd.worker_time == pytest.approx(sum(sums))
    # pointwise sanity: the busiest arm carries at least a_i times its smallest draw
    for t, ai in zip(rnd.per_arm(), a):
        if ai:
            assert rnd.round_time >= ai * t.min() - 1e-9


def test_sandwich_bound_small_monte_carlo():
    fleet = make_fleet("SqrtExp", 4)
    a = np.array([3, 2, 1, 1])
    rng = np.random.default_rng(11)
    reps = 20_000
    counts = np.tile(a, reps)
    big = FleetSpec(list(fleet.arms) * reps)
    times, owner = big.draw(counts, rng)
    sums = np.bincount(owner, weights=times, minlength=big.n).reshape(reps, 4)
    c = sums.max(axis=1)
    ell = proxy_loss(a, fleet.means)
    eta = float(np.max(fleet.orlicz_bounds / fleet.means))
    se = c.std() / math.sqrt(reps)
    assert ell - 3 * se <= c.mean() <= (1 + 4 * eta * math.log(7)) * ell


# -- greedy rounds -----------------------------------------------------------------


def test_greedy_serial_worker():
    rnd = run_greedy_round(det_fleet(2.0), 3, np.random.default_rng(0))
    assert rnd.round_time == 6.0 and rnd.worker_time == 6.0


def test_greedy_fast_worker_finishes_twice():
    rnd = run_greedy_round(det_fleet(1.0, 100.0), 2, np.random.default_rng(0))
    assert rnd.round_time == 2.0
    assert rnd.worker_time == 4.0
    assert rnd.trace.completion_events == [(0, 1.0), (0, 2.0)]
    assert rnd.counts.tolist() == [2, 0]


def test_greedy_hand_trace_with_ties():
    # completions: w0 at 1,2,3,...; w1 at 2,4; w2 at 3 -> first four by (time, worker)
    rnd = run_greedy_round(det_fleet(1.0, 2.0, 3.0), 4, np.random.default_rng(0))
    assert rnd.trace.completion_events == [(0, 1.0), (0, 2.0), (1, 2.0), (0, 3.0)]
    assert rnd.round_time == 3.0 and rnd.worker_time == 9.0
    assert rnd.counts.tolist() == [3, 1, 0]


def test_greedy_unused_tasks():
    fleet = make_fleet("SqrtExp", 1000)
    rnd = run_greedy_round(fleet, 10, np.random.default_rng(3))
    assert rnd.trace.tasks_completed == 10
    assert rnd.trace.tasks_abandoned >= 990


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_greedy_trace_invariants(n, B, seed):
    rnd = run_greedy_round(make_fleet("SqrtExp", n), B, np.random.default_rng(seed))
    ev = rnd.trace.completion_events
    assert len(ev) == B == rnd.counts.sum()
    assert ev == sorted(ev, key=lambda e: (e[1], e[0]))
    assert rnd.round_time == ev[-1][1]
    assert rnd.worker_time == pytest.approx(n * rnd.round_time)
    # per-worker completion times are cumulative sums of its durations
    for w in set(e[0] for e in ev):
        t = [e[1] for e in ev if e[0] == w]
        d = rnd.trace.durations[[i for i, e in enumerate(ev) if e[0] == w]]
        np.testing.assert_allclose(t, np.cumsum(d))


def brute_greedy(fleet, B):
    # plain event loop on a deterministic fleet
    next_done = list(fleet.means)
    done = []
    while len(done) < B:
        w = min(range(fleet.n), key=lambda i: (next_done[i], i))
        done.append((w, next_done[w]))
        next_done[w] += fleet.means[w]
    return done


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=6), st.integers(1, 12))
def test_greedy_matches_event_loop_and_beats_static(means, B):
    fleet = det_fleet(*[float(m) for m in means])
    rnd = run_greedy_round(fleet, B, np.random.default_rng(0))
    assert rnd.trace.completion_events == brute_greedy(fleet, B)
    best = proxy_loss(optimal_allocation(fleet.means, B), fleet.means)
    assert rnd.round_time <= best


# -- warm start ------------------------------------------------------------------


def test_warm_start_zero_rounds_is_identity():
    st0 = AllocatorState.initial(3)
    out = warm_start(st0, det_fleet(1, 2, 3), Policy("ATA", alpha=1.0), 0, 3, np.random.default_rng(0))
    assert out is st0


def test_warm_start_learns_deterministic_means_exactly():
    fleet = det_fleet(1.0, 2.0, 4.0)
    st1 = warm_start(AllocatorState.initial(3), fleet, Policy("ATAEmpirical", eta=0.5), 200, 3, np.random.default_rng(0))
    seen = st1.usage_counts > 0
    assert seen.all()
    np.testing.assert_array_equal(st1.empirical_means, fleet.means)
    assert st1.round_index == 201


def test_warm_start_rejects_greedy():
    with pytest.raises(ValueError):
        warm_start(AllocatorState.initial(2), det_fleet(1, 2), Policy("GTA"), 5, 2, np.random.default_rng(0))


def test_rounds_to_optimal_oracle_is_immediate():
    k, _ = rounds_to_optimal(Policy("OFTA"), make_fleet("SqrtExp", 5), 7, np.random.default_rng(0))
    assert k == 1


def test_warm_start_speeds_up_first_optimal_allocation():
    fleet = make_fleet("LinearExp", 6)
    policy = Policy("ATAEmpirical", eta=1.0)
    cold, _ = rounds_to_optimal(policy, fleet, 5, np.random.default_rng(1))
    warm_state = warm_start(AllocatorState.initial(6), fleet, policy, 20_000, 5, np.random.default_rng(2))
    warm, _ = rounds_to_optimal(policy, fleet, 5, np.random.default_rng(3), state=warm_state)
    assert warm is not None and cold is not None
    assert warm < cold


# -- experiments -----------------------------------------------------------------


def test_streams_are_independent_and_reproducible():
    a = make_streams(5)
    b = make_streams(5)
    assert a["times"].random() == b["times"].random()
    assert make_streams(5)["times"].random() != make_streams(5)["policy"].random()
    assert make_streams(5)["grad"].random() != make_streams(6)["grad"].random()


def test_ofta_deterministic_fleet_has_constant_rounds_and_zero_regret():
    c = cfg(family={"kind": "Custom", "arms": [{"kind": "Deterministic", "value": v} for v in (1, 2, 3, 4, 5)]})
    recs = list(run_experiment(c, 1))
    assert len(recs) == 50
    assert len({r.round_time for r in recs}) == 1
    assert all(r.cum_regret == 0 for r in recs)


@pytest.mark.parametrize("policy", ["GTA", "OFTA", "UTA", {"kind": "ATA", "alpha": 50.0}, {"kind": "ATAEmpirical", "eta": 1.0}])
def test_records_are_monotone_and_deterministic(policy):
    c = cfg(policy=policy, K=200, optimizer={"d": 10})
    recs = list(run_experiment(c, 3))
    again = list(run_experiment(c, 3))
    assert [vars(r) for r in recs] == [vars(r) for r in again]
    for prev, cur in zip(recs, recs[1:]):
        assert cur.cum_runtime >= prev.cum_runtime
        assert cur.cum_worker_time >= prev.cum_worker_time
        assert cur.round == prev.round + 1


def test_gradient_stream_shared_across_policies():
    a = [r.suboptimality for r in run_experiment(cfg(policy="GTA", optimizer={"d": 8}), 2)]
    b = [r.suboptimality for r in run_experiment(cfg(policy="UTA", optimizer={"d": 8}), 2)]
    assert a == b


def test_threshold_stops_run_early():
    c = config_from_dict(
        dict(n=5, B=3, K=100_000, policy="OFTA", family="SqrtExp", optimizer={"d": 5}, stop={"threshold": 1e-3})
    )
    recs = list(run_experiment(c, 1))
    assert recs[-1].suboptimality < 1e-3
    assert all(r.suboptimality >= 1e-3 for r in recs[:-1])
    assert len(recs) < 100_000


def test_gta_wastes_more_worker_time_than_ofta_as_n_grows():
    ratios = []
    for n in (5, 20, 60):
        totals = {}
        for pol in ("GTA", "OFTA"):
            totals[pol] = [r for r in run_experiment(cfg(n=n, B=10, K=300, policy=pol), 1)][-1].cum_worker_time
        ratios.append(totals["GTA"] / totals["OFTA"])
    assert ratios[0] < ratios[1] < ratios[2]


def test_warm_start_in_experiment_changes_allocations():
    base = cfg(policy={"kind": "ATAEmpirical", "eta": 1.0}, K=5)
    cold = [r.allocation for r in run_experiment(base, 1, keep_allocations=True)]
    warm = [r.allocation for r in run_experiment(base.with_(warm_start_P=2000), 1, keep_allocations=True)]
    assert any(not np.array_equal(x, y) for x, y in zip(cold, warm))
