import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freightmarket.broker import (
    Allocation,
    QuoteSheet,
    allocate,
    broker_reward,
    max_volume_allocation,
    solve_knapsack,
)
from freightmarket.market import Job, MarketState

from util import brute_force_knapsack


def make_state(volumes):
    return MarketState(0, [Job(i, 1, 1, v, 1) for i, v in enumerate(volumes)])


def make_quotes(bids, asks):
    return QuoteSheet(0, {i: b for i, b in enumerate(bids)}, {i: a for i, a in enumerate(asks)})


def test_single_profitable_job_selected():
    alloc = allocate(make_state([1]), make_quotes([1.6], [1.4]), capacity=1)
    assert alloc.selected == [0]
    assert alloc.total_spread == pytest.approx(0.2)
    assert alloc.used_volume == 1


def test_negative_spread_never_selected():
    alloc = allocate(make_state([1]), make_quotes([1.0], [1.5]), capacity=1)
    assert alloc.selected == []
    assert alloc.flags == {0: 0}


def test_three_job_example_picks_best_pair():
    # volumes (2,2,3), spreads (3,2,4), capacity 4 -> first two, value 5
    state = make_state([2, 2, 3])
    quotes = make_quotes([3.0, 2.0, 4.0], [0.0, 0.0, 0.0])
    alloc = allocate(state, quotes, capacity=4)
    assert sorted(alloc.selected) == [0, 1]
    assert alloc.total_spread == pytest.approx(5.0)
    assert alloc.used_volume == 4


def test_zero_spread_jobs_are_excluded():
    alloc = allocate(make_state([1, 1]), make_quotes([1.5, 1.6], [1.5, 1.5]), capacity=2)
    assert alloc.selected == [1]


def test_negative_capacity_rejected():
    with pytest.raises(ValueError):
        allocate(make_state([1]), make_quotes([2.0], [1.0]), capacity=-1)


def test_quotes_must_cover_state():
    with pytest.raises(ValueError):
        allocate(make_state([1, 1]), make_quotes([2.0], [1.0]), capacity=2)


def test_broker_reward_examples():
    state = make_state([2, 2, 3])
    quotes = make_quotes([3.0, 2.0, 4.0], [0.0, 0.0, 0.0])
    assert broker_reward(Allocation(flags={}), quotes) == 0.0
    single = allocate(make_state([1]), make_quotes([2.0], [1.0]), capacity=1)
    assert broker_reward(single, make_quotes([2.0], [1.0])) == pytest.approx(1.0)
    alloc = allocate(state, quotes, capacity=4)
    assert broker_reward(alloc, quotes) == pytest.approx(5.0)
    assert broker_reward(alloc, quotes) == pytest.approx(alloc.total_spread)


def test_max_volume_examples():
    assert max_volume_allocation(make_state([3, 3, 3]), 7).total_volume == 6
    assert max_volume_allocation(make_state([5]), 40).total_volume == 5
    assert max_volume_allocation(MarketState(0, []), 10).total_volume == 0


def test_tie_break_prefers_lower_job_id():
    # two identical jobs, room for one: the earlier id wins
    alloc = allocate(make_state([1, 1]), make_quotes([2.0, 2.0], [1.0, 1.0]), capacity=1)
    assert alloc.selected == [0]


def test_all_fits_selects_exactly_positive_spreads():
    g = np.random.default_rng(0)
    for _ in range(50):
        n = int(g.integers(1, 8))
        vols = g.integers(1, 6, size=n)
        bids = g.normal(1.5, 1.0, size=n)
        asks = g.normal(1.5, 1.0, size=n)
        state = make_state(vols.tolist())
        alloc = allocate(state, make_quotes(bids, asks), capacity=int(vols.sum()))
        expect = [i for i in range(n) if bids[i] - asks[i] > 0]
        assert sorted(alloc.selected) == expect


@settings(max_examples=200, deadline=None)
@given(
    items=st.lists(
        st.tuples(st.integers(1, 5), st.floats(-5, 5, allow_nan=False)), min_size=0, max_size=9
    ),
    capacity=st.integers(0, 15),
)
def test_allocate_matches_brute_force(items, capacity):
    vols = [v for v, _ in items]
    spreads = [s for _, s in items]
    state = make_state(vols)
    quotes = make_quotes(spreads, [0.0] * len(items))
    alloc = allocate(state, quotes, capacity)
    best = brute_force_knapsack(vols, [max(s, 0.0) for s in spreads], capacity)
    assert alloc.total_spread == pytest.approx(best, abs=1e-12)
    assert alloc.used_volume <= capacity


@settings(max_examples=200, deadline=None)
@given(
    volumes=st.lists(st.integers(1, 5), min_size=0, max_size=9),
    capacity=st.integers(0, 15),
)
def test_max_volume_matches_brute_force(volumes, capacity):
    best = brute_force_knapsack(volumes, [float(v) for v in volumes], capacity)
    alloc = max_volume_allocation(make_state(volumes), capacity)
    assert alloc.total_volume == int(best)
    assert alloc.used_volume == alloc.total_volume
    assert alloc.used_volume <= capacity


def test_no_selected_job_has_bid_below_ask():
    g = np.random.default_rng(123)
    for _ in range(2000):
        n = int(g.integers(1, 8))
        vols = g.integers(1, 6, size=n).tolist()
        bids = g.normal(1.5, 1.5, size=n)
        asks = g.normal(1.5, 1.5, size=n)
        quotes = make_quotes(bids, asks)
        alloc = allocate(make_state(vols), quotes, int(g.integers(0, 12)))
        for jid in alloc.selected:
            assert bids[jid] - asks[jid] > 0.0


def test_optimal_value_monotone_in_capacity():
    g = np.random.default_rng(9)
    for _ in range(50):
        n = int(g.integers(1, 7))
        vols = g.integers(1, 6, size=n).tolist()
        bids = g.normal(2.0, 1.0, size=n)
        asks = g.normal(1.0, 1.0, size=n)
        state = make_state(vols)
        quotes = make_quotes(bids, asks)
        prev_spread = -1.0
        prev_vol = -1
        for cap in range(0, sum(vols) + 2):
            spread = allocate(state, quotes, cap).total_spread
            vol = max_volume_allocation(state, cap).total_volume
            assert spread >= prev_spread - 1e-12
            assert vol >= prev_vol
            prev_spread, prev_vol = spread, vol


def test_solve_knapsack_skips_oversized_items():
    mask, value, used = solve_knapsack(
        np.array([10, 2]), np.array([100.0, 1.0]), capacity=5
    )
    assert mask.tolist() == [False, True]
    assert value == pytest.approx(1.0)
    assert used == 2
