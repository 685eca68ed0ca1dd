"""Allocation and policy tests: feasibility checks, the skip-and-continue
fill, and the greedy baseline's ordering rules."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netradar import features
from netradar.policy import (Allocation, FixedPolicy, GreedyBaseline,
                             budgeted_fill, empty_allocation, make_allocation,
                             validate_allocation)
from netradar.world import ObservationMatrix


def obs_with_ranges(ranges, fov=None):
    m = len(ranges)
    rows = np.zeros((m, features.NUM_FEATURES))
    rows[:, features.RANGE] = ranges
    mask = np.ones(m, dtype=bool) if fov is None else np.asarray(fov, dtype=bool)
    return ObservationMatrix(rows=rows, fov_mask=mask, radar_id=0)


class TestAllocation:
    def test_make_allocation_sums_costs(self):
        costs = np.array([1.0, 2.0, 3.0])
        a = make_allocation(0, [2, 0], costs)
        assert a.total_cost == pytest.approx(4.0)
        assert a.targets == (2, 0)
        assert a.target_set == frozenset({0, 2})

    def test_contains_and_len(self):
        a = make_allocation(1, [3, 1], np.ones(5))
        assert 3 in a and 1 in a and 0 not in a
        assert len(a) == 2

    def test_empty(self):
        e = empty_allocation(2)
        assert e.targets == () and e.total_cost == 0.0


class TestValidate:
    costs = np.array([1.0, 1.5, 2.0, 0.5])

    def test_accepts_feasible(self):
        a = make_allocation(0, [0, 3], self.costs)
        assert validate_allocation(a, budget=2.0, costs=self.costs)

    def test_rejects_duplicates(self):
        a = Allocation(0, (1, 1), 3.0)
        assert not validate_allocation(a, budget=10.0, costs=self.costs)

    def test_rejects_over_budget(self):
        a = make_allocation(0, [1, 2], self.costs)
        assert not validate_allocation(a, budget=3.0, costs=self.costs)

    def test_rejects_out_of_range_ids(self):
        a = Allocation(0, (4,), 1.0)
        assert not validate_allocation(a, budget=10.0, costs=self.costs)
        b = Allocation(0, (-1,), 1.0)
        assert not validate_allocation(b, budget=10.0, costs=self.costs)

    def test_rejects_inconsistent_total(self):
        a = Allocation(0, (0,), 0.25)
        assert not validate_allocation(a, budget=10.0, costs=self.costs)


class TestBudgetedFill:
    def test_skip_and_continue(self):
        # order 0,1,2 with costs 3,3,1 and budget 4: takes 0, skips 1, takes 2
        costs = np.array([3.0, 3.0, 1.0])
        out = budgeted_fill([0, 1, 2], costs, budget=4.0,
                            allowed=np.ones(3, dtype=bool))
        assert out == [0, 2]

    def test_respects_allowed_mask(self):
        costs = np.ones(3)
        allowed = np.array([True, False, True])
        out = budgeted_fill([1, 0, 2], costs, budget=10.0, allowed=allowed)
        assert out == [0, 2]

    def test_zero_budget_takes_nothing(self):
        out = budgeted_fill([0, 1], np.ones(2), budget=0.5,
                            allowed=np.ones(2, dtype=bool))
        assert out == []


class TestGreedyBaseline:
    def test_picks_nearest_within_budget(self):
        obs = obs_with_ranges([5.0, 1.0, 3.0, 2.0, 4.0, 6.0])
        a = GreedyBaseline().decide(obs, 0, budget=4.0, costs=np.ones(6))
        assert a.target_set == {1, 3, 2, 4}

    def test_ties_broken_by_target_id(self):
        obs = obs_with_ranges([2.0, 2.0, 2.0])
        a = GreedyBaseline().decide(obs, 0, budget=2.0, costs=np.ones(3))
        assert a.targets == (0, 1)

    def test_ignores_targets_outside_fov(self):
        obs = obs_with_ranges([1.0, 2.0, 3.0], fov=[False, True, True])
        a = GreedyBaseline().decide(obs, 0, budget=4.0, costs=np.ones(3))
        assert a.target_set == {1, 2}

    def test_skip_and_continue_with_costly_near_target(self):
        obs = obs_with_ranges([1.0, 2.0, 3.0])
        costs = np.array([5.0, 1.0, 1.0])
        a = GreedyBaseline().decide(obs, 0, budget=2.0, costs=costs)
        assert a.target_set == {1, 2}


class TestFixedPolicy:
    def test_requests_fixed_targets(self):
        obs = obs_with_ranges([1.0, 2.0, 3.0])
        a = FixedPolicy(targets=(2, 0)).decide(obs, 0, budget=4.0, costs=np.ones(3))
        assert a.target_set == {0, 2}

    def test_respects_fov(self):
        obs = obs_with_ranges([1.0, 2.0], fov=[False, True])
        a = FixedPolicy(targets=(0, 1)).decide(obs, 0, budget=4.0, costs=np.ones(2))
        assert a.target_set == {1}


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_fill_is_always_feasible(seed):
    rng = np.random.default_rng(seed)
    m = rng.integers(1, 12)
    costs = rng.uniform(0.1, 3.0, m)
    budget = float(rng.uniform(0.5, 6.0))
    order = rng.permutation(m)
    allowed = rng.random(m) < 0.8
    chosen = budgeted_fill(order, costs, budget, allowed)
    assert len(set(chosen)) == len(chosen)
    assert all(allowed[t] for t in chosen)
    assert sum(costs[t] for t in chosen) <= budget + 1e-9


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_greedy_always_returns_valid_allocation(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 15))
    obs = obs_with_ranges(rng.uniform(0, 10, m), fov=rng.random(m) < 0.7)
    costs = rng.uniform(0.1, 2.0, m)
    budget = float(rng.uniform(0.5, 5.0))
    a = GreedyBaseline().decide(obs, 0, budget, costs)
    assert validate_allocation(a, budget, costs)
    assert all(obs.fov_mask[t] for t in a.targets)
