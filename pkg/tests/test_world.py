"""Simulation tests: scenario validation and round-trips, determinism,
the step loop's bookkeeping, observation features, and target replacement."""

import json
import math

import numpy as np
import pytest

import netradar.geometry as g
from netradar import features, tracking
from netradar.policy import Allocation, AllocationPolicy, FixedPolicy, GreedyBaseline
from netradar.world import (ObservationMatrix, RadarSpec, Scenario,
                            ScenarioError, TargetSpec, World, WorldError,
                            load_scenario, load_scenario_file, run_episode,
                            save_scenario_file, step)


def small_scenario(**overrides):
    base = dict(
        name="test",
        bounds=(0.0, 0.0, 20.0, 20.0),
        radars=(
            RadarSpec(position=(5.0, 10.0)),
            RadarSpec(position=(15.0, 10.0)),
        ),
        n_targets=6,
        episode_length=50,
        vertices_per_ellipse=32,
    )
    base.update(overrides)
    return Scenario(**base)


class RecordingPolicy(AllocationPolicy):
    """Greedy that also records every observation it was given."""

    def __init__(self):
        self.seen = []
        self._greedy = GreedyBaseline()

    def decide(self, obs, radar_id, budget, costs):
        self.seen.append(obs)
        return self._greedy.decide(obs, radar_id, budget, costs)


class OverBudgetPolicy(AllocationPolicy):
    def decide(self, obs, radar_id, budget, costs):
        m = obs.rows.shape[0]
        targets = tuple(range(m))
        return Allocation(radar_id, targets, float(costs.sum()))


class TestScenarioValidation:
    def test_missing_field_named(self):
        with pytest.raises(ScenarioError, match="n_targets"):
            Scenario.from_dict({"name": "x", "bounds": [0, 0, 1, 1], "radars": []})

    def test_unknown_field_named(self):
        d = small_scenario().to_dict()
        d["speeed_range"] = [0, 1]
        with pytest.raises(ScenarioError, match="speeed_range"):
            Scenario.from_dict(d)

    def test_bad_radar_budget_named(self):
        with pytest.raises(ScenarioError, match=r"radars\[1\]\.budget"):
            small_scenario(radars=(RadarSpec(position=(1, 1)),
                                   RadarSpec(position=(2, 2), budget=-1.0)))

    def test_bad_bounds(self):
        with pytest.raises(ScenarioError, match="bounds"):
            small_scenario(bounds=(0, 0, -5, 5))

    def test_bad_cost_model(self):
        with pytest.raises(ScenarioError, match="cost_model"):
            small_scenario(cost_model="quadratic")

    def test_explicit_targets_count_checked(self):
        with pytest.raises(ScenarioError, match="targets"):
            small_scenario(targets=(TargetSpec((1, 1), 0.3, 0.0),))

    def test_vertex_floor(self):
        with pytest.raises(ScenarioError, match="vertices_per_ellipse"):
            small_scenario(vertices_per_ellipse=4)


class TestScenarioRoundTrip:
    def test_dict_round_trip(self):
        scen = small_scenario(cost_model="range4", range4_ref=8.0,
                              targets=tuple(TargetSpec((5.0 + k, 10.0), 0.3, 45.0)
                                            for k in range(6)))
        again = Scenario.from_dict(scen.to_dict())
        assert again == scen

    def test_file_round_trip(self, tmp_path):
        scen = small_scenario()
        path = tmp_path / "scen.json"
        save_scenario_file(scen, path)
        assert load_scenario_file(path) == scen

    def test_invalid_json_reported(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{broken", encoding="utf-8")
        with pytest.raises(ScenarioError, match="invalid JSON"):
            load_scenario_file(path)


class TestDeterminism:
    def test_same_seed_same_trajectory(self):
        scen = small_scenario()
        pols = [GreedyBaseline(), GreedyBaseline()]
        w1 = load_scenario(scen, seed=11)
        w2 = load_scenario(scen, seed=11)
        u1 = run_episode(w1, pols, 25)
        u2 = run_episode(w2, pols, 25)
        np.testing.assert_array_equal(u1, u2)
        s1, s2 = w1.snapshot(), w2.snapshot()
        for key in s1:
            np.testing.assert_array_equal(s1[key], s2[key], err_msg=key)

    def test_different_seed_differs(self):
        scen = small_scenario()
        pols = [GreedyBaseline(), GreedyBaseline()]
        u1 = run_episode(load_scenario(scen, 1), pols, 10)
        u2 = run_episode(load_scenario(scen, 2), pols, 10)
        assert not np.array_equal(u1, u2)


class TestStepLoop:
    def test_step_returns_current_utility(self):
        scen = small_scenario()
        w = load_scenario(scen, 3)
        _, rec = step(w, [GreedyBaseline(), GreedyBaseline()])
        assert rec.utility == pytest.approx(
            g.utility(w.prev_inter_areas, scen.area_scale), rel=1e-12)
        assert rec.per_target_area.shape == (scen.n_targets,)

    def test_utilities_in_unit_interval(self):
        utils = run_episode(load_scenario(small_scenario(), 4),
                            [GreedyBaseline(), GreedyBaseline()], 30)
        assert np.all(utils > 0) and np.all(utils <= 1)

    def test_infeasible_allocation_replaced_and_logged(self):
        w = load_scenario(small_scenario(), 5)
        w.step([OverBudgetPolicy(), GreedyBaseline()])
        assert any("infeasible" in e and "radar 0" in e for e in w.event_log)
        assert w.last_allocations[0].targets == ()
        assert len(w.last_allocations[1]) > 0

    def test_wrong_policy_count_rejected(self):
        w = load_scenario(small_scenario(), 6)
        with pytest.raises(WorldError):
            w.step([GreedyBaseline()])

    def test_budget_always_respected(self):
        scen = small_scenario(cost_model="range4", range4_ref=6.0)
        w = load_scenario(scen, 7)
        for _ in range(20):
            w.step([GreedyBaseline(), GreedyBaseline()])
            for i, alloc in enumerate(w.last_allocations):
                assert alloc.total_cost <= w.budgets[i] + 1e-9

    def test_later_radars_see_committed_budget(self):
        scen = small_scenario()
        recorders = [RecordingPolicy(), RecordingPolicy()]
        w = load_scenario(scen, 8)
        w.step(recorders)
        fracs = {}
        for rec in recorders:
            obs = rec.seen[0]
            fracs[obs.radar_id] = obs.rows[0, features.COMMITTED_FRAC]
        first = [i for i, f in fracs.items() if f == 0.0]
        assert len(first) == 1, "exactly one radar decides first and sees 0"
        second = (set(fracs) - set(first)).pop()
        committed = w.last_allocations[first[0]].total_cost
        assert fracs[second] == pytest.approx(committed / w.budgets.sum())

    def test_views_of_not_yet_visited_radars_are_previous_step(self):
        scen = small_scenario()
        pols = [GreedyBaseline(), GreedyBaseline()]
        w = load_scenario(scen, 9)
        w.step(pols)
        prev = tuple(a.target_set for a in w.last_allocations)
        w.step(pols)
        visit_order = list(w.view_trace)
        first = visit_order[0]
        for later in visit_order[1:]:
            assert w.view_trace[first][later] == prev[later]


class TestMeasurementGating:
    def test_allocated_visible_target_resets_staleness(self):
        scen = small_scenario(n_targets=2,
                              targets=(TargetSpec((6.0, 10.0), 0.0, 0.0),
                                       TargetSpec((14.0, 10.0), 0.0, 0.0)))
        w = load_scenario(scen, 10)
        w.step([FixedPolicy(targets=(0,)), FixedPolicy(targets=(1,))])
        assert w.steps_since[0, 0] == 0
        assert w.steps_since[1, 1] == 0
        assert w.steps_since[0, 1] == 1 or not w.fov_contains(0, w.positions[1])

    def test_unallocated_target_grows_stale_and_uncertain(self):
        scen = small_scenario(n_targets=2,
                              targets=(TargetSpec((6.0, 10.0), 0.0, 0.0),
                                       TargetSpec((14.0, 10.0), 0.0, 0.0)))
        w = load_scenario(scen, 11)
        tr0 = np.trace(w.covs[0, 1][:2, :2])
        for k in range(5):
            w.step([FixedPolicy(targets=(0,)), FixedPolicy(targets=(0,))])
            assert w.steps_since[0, 1] == k + 1
        assert np.trace(w.covs[0, 1][:2, :2]) > tr0

    def test_target_outside_true_fov_not_measured(self):
        # radar 0 has a short range; target 1 sits far away
        scen = small_scenario(
            n_targets=2,
            radars=(RadarSpec(position=(2.0, 10.0), fov_range=5.0),
                    RadarSpec(position=(15.0, 10.0))),
            targets=(TargetSpec((3.0, 10.0), 0.0, 0.0),
                     TargetSpec((15.0, 10.0), 0.0, 0.0)),
        )
        w = load_scenario(scen, 12)
        w.step([FixedPolicy(targets=(0, 1), respect_fov=False), FixedPolicy(targets=())])
        assert w.steps_since[0, 0] == 0
        assert w.steps_since[0, 1] == 1


class TestObservationFeatures:
    def test_hand_checked_geometry_features(self):
        scen = small_scenario(n_targets=1,
                              targets=(TargetSpec((9.0, 13.0), 0.0, 0.0),))
        w = load_scenario(scen, 13)
        w.means[0, 0] = [8.0, 14.0, 0.6, -0.8]
        w.covs[0, 0] = np.diag([0.5, 0.5, 0.25, 0.25])
        w._obs_cache = None
        obs = w.observe(0)
        L = w._length_scale
        row = obs.rows[0]
        # radar 0 sits at (5, 10); estimate (8, 14) is rel (3, 4), range 5
        assert row[features.REL_X] * L == pytest.approx(3.0)
        assert row[features.REL_Y] * L == pytest.approx(4.0)
        assert row[features.RANGE] * L == pytest.approx(5.0)
        assert row[features.BEARING_SIN] == pytest.approx(0.8)
        assert row[features.BEARING_COS] == pytest.approx(0.6)
        v = max(scen.speed_range[1], 1e-6)
        assert row[features.SPEED] * v == pytest.approx(1.0)
        # closing speed: -(rel . vel)/range = -(3*0.6 - 4*0.8)/5 = 0.28
        assert row[features.CLOSING_SPEED] * v == pytest.approx(0.28)
        assert row[features.POS_COV_TRACE] * scen.area_cap == pytest.approx(1.0)
        # own ellipse area pi k^2 sqrt(det) = pi * 4 * 0.5
        assert row[features.OWN_AREA] * scen.area_cap == pytest.approx(2.0 * math.pi)
        # closest other radar is radar 1 at (15, 10): dist from (8, 14) is sqrt(65)
        assert row[features.OTHER_DIST] * L == pytest.approx(math.sqrt(65.0))
        assert row[features.OTHER_REL_X] * L == pytest.approx(7.0)
        assert row[features.OTHER_REL_Y] * L == pytest.approx(-4.0)

    def test_fov_mask_matches_fov_contains(self):
        w = load_scenario(small_scenario(), 14)
        obs = w.observe(1)
        np.testing.assert_array_equal(
            obs.fov_mask, w.fov_contains(1, w.means[1, :, :2]))

    def test_staleness_feature_tracks_counter(self):
        scen = small_scenario(n_targets=2,
                              targets=(TargetSpec((6.0, 10.0), 0.0, 0.0),
                                       TargetSpec((14.0, 10.0), 0.0, 0.0)))
        w = load_scenario(scen, 15)
        for _ in range(3):
            w.step([FixedPolicy(targets=(0,)), FixedPolicy(targets=(0,))])
        obs = w.observe(0)
        assert obs.rows[1, features.STALENESS] * features.STALENESS_CAP \
            == pytest.approx(3.0)

    def test_shared_utility_features(self):
        w = load_scenario(small_scenario(), 16)
        w.step([GreedyBaseline(), GreedyBaseline()])
        obs = w.observe(0)
        np.testing.assert_allclose(
            obs.rows[:, features.EST_UTILITY],
            np.exp(-w.prev_inter_areas / w.scenario.area_scale), atol=1e-12)

    def test_budget_slack_reflects_previous_step(self):
        scen = small_scenario(n_targets=2,
                              targets=(TargetSpec((6.0, 10.0), 0.0, 0.0),
                                       TargetSpec((14.0, 10.0), 0.0, 0.0)))
        w = load_scenario(scen, 17)
        w.step([FixedPolicy(targets=(0,)), FixedPolicy(targets=())])
        obs0 = w.observe(0)
        obs1 = w.observe(1)
        # radar 0 spent 1 of 4; radar 1 spent nothing
        assert obs0.rows[0, features.BUDGET_SLACK] == pytest.approx(0.75)
        assert obs1.rows[0, features.BUDGET_SLACK] == pytest.approx(1.0)

    def test_observe_rejects_bad_radar_id(self):
        w = load_scenario(small_scenario(), 18)
        with pytest.raises(WorldError):
            w.observe(5)


class TestCostModels:
    def test_unit_costs(self):
        w = load_scenario(small_scenario(), 19)
        np.testing.assert_array_equal(w.costs_for(0), np.ones(6))

    def test_range4_costs_clamped_and_monotone(self):
        scen = small_scenario(cost_model="range4", range4_ref=5.0)
        w = load_scenario(scen, 20)
        c = w.costs_for(0)
        assert np.all(c >= 0.1) and np.all(c <= w.budgets[0])
        rel = w.means[0, :, :2] - w.radar_pos[0]
        r = np.hypot(rel[:, 0], rel[:, 1])
        order = np.argsort(r)
        assert np.all(np.diff(c[order]) >= -1e-12)


class TestTargetReplacement:
    def test_departed_target_reinitialized(self):
        # fast target in a tiny region: replacement happens within a few steps
        scen = small_scenario(
            bounds=(0.0, 0.0, 6.0, 6.0),
            radars=(RadarSpec(position=(2.0, 3.0), fov_range=10.0),
                    RadarSpec(position=(4.0, 3.0), fov_range=10.0)),
            n_targets=1,
            speed_range=(2.0, 3.0),
            targets=(TargetSpec((5.5, 3.0), 3.0, 0.0),),
        )
        w = load_scenario(scen, 21)
        w.step([FixedPolicy(targets=(0,)), FixedPolicy(targets=(0,))])
        # the target moved out at x = 5.5 + 3 > 6 and was replaced
        x0, y0, x1, y1 = scen.bounds
        p = w.positions[0]
        on_edge = (abs(p[0] - x0) < 1e-9 or abs(p[0] - x1) < 1e-9
                   or abs(p[1] - y0) < 1e-9 or abs(p[1] - y1) < 1e-9)
        assert on_edge
        np.testing.assert_array_equal(w.steps_since[:, 0], 0)
        for i in range(2):
            np.testing.assert_allclose(w.covs[i, 0], np.diag(tracking.INIT_COV_DIAG))
            assert np.linalg.norm(w.means[i, 0, :2] - p) < 4 * scen.meas_noise_sigma + 1e-9
        # heading points into the region
        nxt = p + w.speeds[0] * np.array([math.cos(w.headings[0]),
                                          math.sin(w.headings[0])])
        assert x0 <= nxt[0] <= x1 and y0 <= nxt[1] <= y1

    def test_replaced_target_has_zero_utility_delta(self):
        scen = small_scenario(
            bounds=(0.0, 0.0, 6.0, 6.0),
            radars=(RadarSpec(position=(2.0, 3.0), fov_range=10.0),
                    RadarSpec(position=(4.0, 3.0), fov_range=10.0)),
            n_targets=1,
            speed_range=(0.0, 0.0),
            targets=(TargetSpec((5.9, 3.0), 3.0, 0.0),),
        )
        w = load_scenario(scen, 22)
        w.step([FixedPolicy(targets=()), FixedPolicy(targets=())])
        obs = w.observe(0)
        assert obs.rows[0, features.EST_UTILITY_DELTA] == pytest.approx(0.0, abs=1e-15)


class TestSingleRadar:
    def test_lone_radar_world_runs(self):
        scen = small_scenario(radars=(RadarSpec(position=(10.0, 10.0)),))
        utils = run_episode(load_scenario(scen, 23), [GreedyBaseline()], 10)
        assert utils.shape == (10,)
        obs = load_scenario(scen, 24).observe(0)
        assert np.all(obs.rows[:, features.OTHER_COVERAGE] == 0.0)
