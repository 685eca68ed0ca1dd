"""End-to-end acceptance gate: one test per numbered criterion.

Each test measures its own margin and registers it with the conftest
reporter, which prints a per-criterion PASS/FAIL line after the run.
Training-based criteria (8, 9, 10) run the full pipeline at a desk-scale
budget and compare against the greedy baseline on paired episode seeds.
"""

import dataclasses
import itertools
import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from netradar import cli, esto, geometry, seqdec, tracking
from netradar.cmaes import cmaes_optimize
from netradar.esto import PreferencePolicy
from netradar.neural import ppo
from netradar.policy import AllocationPolicy, GreedyBaseline, make_allocation
from netradar.world import (
    RadarSpec,
    Scenario,
    World,
    resolve_scenario,
    run_episode,
)


# -- policy-space criteria ----------------------------------------------------

class TestPolicySpace:
    def test_c01_round_trip_200_policies(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(11)
        worst = 0.0
        for k in range(200):
            m = 1 + k % 4
            n_agents = 1 + k % 2
            probs = tuple(
                rng.dirichlet(np.ones(1 << m), size=1 + k % 3)
                for _ in range(n_agents))
            pi = seqdec.PolicyTable(n_targets=m, probs=probs)
            back = seqdec.transpose(seqdec.invert(pi))
            for a, b in zip(back.probs, pi.probs):
                worst = max(worst, float(np.max(np.abs(a - b))))
        elapsed = time.perf_counter() - t0
        record_criterion(1, f"max dev {worst:.2e}, {elapsed:.1f}s")
        assert worst < 1e-9
        assert elapsed < 120

    def test_c02_value_equivalence_50_processes(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(22)
        worst = 0.0
        for k in range(50):
            n_agents = 1 + k % 2
            m = 1 + k % (4 - n_agents)
            M = seqdec.random_instance(
                rng, n_agents=n_agents, n_targets=m,
                n_states=2 + k % 2, n_obs=1 + k % 2, horizon=1 + k % 3)
            sq = seqdec.random_seq_policy(M, rng)
            lifted = seqdec.value_lifted(seqdec.lift(M), sq)
            direct = seqdec.value(M, seqdec.transpose(sq))
            worst = max(worst, abs(lifted - direct))
        elapsed = time.perf_counter() - t0
        record_criterion(2, f"max dev {worst:.2e}, {elapsed:.1f}s")
        assert worst < 1e-9
        assert elapsed < 300

    def test_c03_best_sequential_attains_optimum(self):
        rng = np.random.default_rng(33)
        shapes = [
            dict(n_agents=1, n_targets=2, n_obs=1, n_states=2, horizon=2),
            dict(n_agents=1, n_targets=2, n_obs=2, n_states=3, horizon=2),
            dict(n_agents=2, n_targets=1, n_obs=2, n_states=2, horizon=2),
            dict(n_agents=2, n_targets=1, n_obs=1, n_states=3, horizon=3),
        ]
        worst = 0.0
        for shape in shapes:
            M = seqdec.random_instance(rng, **shape)
            best_subset = max(seqdec.value(M, pi)
                              for pi in _det_subset_policies(M))
            best_seq = max(seqdec.value(M, seqdec.transpose(sq))
                           for sq in _det_seq_policies(M))
            worst = max(worst, abs(best_seq - best_subset))
        record_criterion(3, f"max optimum gap {worst:.2e}")
        assert worst <= 1e-12

    def test_c04_worked_inverse_uniform_two_targets(self):
        pi = seqdec.PolicyTable(n_targets=2,
                                probs=(np.full((1, 4), 0.25),))
        sq = seqdec.invert(pi).probs[0]
        empty, stop = 0b00, 2
        worst = max(
            abs(sq[0, empty, stop] - 0.25),
            abs(sq[0, empty, 0] - 0.375),
            abs(sq[0, empty, 1] - 0.375),
            abs(sq[0, 0b01, stop] - 2.0 / 3.0),
            abs(sq[0, 0b10, stop] - 2.0 / 3.0),
        )
        record_criterion(4, f"max dev {worst:.2e}")
        assert worst < 1e-12


def _det_subset_policies(M):
    """Exhaustive deterministic subset policies of a small process."""
    per_agent = [list(itertools.product(range(M.n_subsets),
                                        repeat=M.n_obs[k]))
                 for k in range(M.n_agents)]
    for combo in itertools.product(*per_agent):
        probs = []
        for k, assignment in enumerate(combo):
            p = np.zeros((M.n_obs[k], M.n_subsets))
            p[np.arange(M.n_obs[k]), assignment] = 1.0
            probs.append(p)
        yield seqdec.PolicyTable(n_targets=M.n_targets, probs=tuple(probs))


def _det_seq_policies(M):
    """Exhaustive deterministic sequential policies of a small process."""
    m = M.n_targets
    n_masks = 1 << m
    allowed = [[j for j in range(m) if not mask >> j & 1] + [m]
               for mask in range(n_masks)]
    per_agent = []
    for k in range(M.n_agents):
        cells = [allowed[mask]
                 for _ in range(M.n_obs[k]) for mask in range(n_masks)]
        per_agent.append(list(itertools.product(*cells)))
    for combo in itertools.product(*per_agent):
        probs = []
        for k, flat in enumerate(combo):
            p = np.zeros((M.n_obs[k], n_masks, m + 1))
            idx = 0
            for omega in range(M.n_obs[k]):
                for mask in range(n_masks):
                    p[omega, mask, flat[idx]] = 1.0
                    idx += 1
            probs.append(p)
        yield seqdec.SeqPolicyTable(n_targets=m, probs=tuple(probs))


# -- numeric-kernel criteria --------------------------------------------------

class TestNumericKernels:
    def test_c05_geometry_against_independent_oracles(self):
        lens = 2.0 * math.acos(0.5) - 0.5 * math.sqrt(3.0)
        circles = [geometry.Ellipse((0.0, 0.0), np.eye(2), scale_k=1.0),
                   geometry.Ellipse((1.0, 0.0), np.eye(2), scale_k=1.0)]
        area = geometry.intersection_area(circles, vertices_per_ellipse=64)
        lens_rel = abs(area - lens) / lens
        mc_ratio = cli._verify_mc_area(np.random.default_rng(55),
                                       n_configs=100, n_samples=1_000_000)
        record_criterion(
            5, f"lens rel err {lens_rel:.2e}, worst MC ratio {mc_ratio:.2f}")
        assert lens_rel < 0.005
        assert mc_ratio <= 1.0

    def test_c06_gradients_match_central_differences(self):
        worst = cli._verify_gradients(np.random.default_rng(66))
        record_criterion(6, f"max rel err {worst:.2e}")
        assert worst < 1e-4

    def test_c07_sphere_maximization_10_seeds(self):
        worst = math.inf
        for seed in range(10):
            _, hist = cmaes_optimize(lambda x: -float(x @ x), d=9,
                                     sigma0=0.5, generations=200,
                                     seed=seed, x0=np.ones(9))
            worst = min(worst, float(hist["best_ever"][-1]))
        record_criterion(7, f"worst seed best fitness {worst:.2e}")
        assert worst > -1e-8


# -- training-pipeline criteria -----------------------------------------------

def _paired_margin(scenario, team, seeds):
    """Mean paired utility difference vs greedy, and twice its SEM."""
    greedy = [GreedyBaseline() for _ in range(scenario.n_radars)]
    diffs = []
    for seed in seeds:
        ours = run_episode(World(scenario, seed=seed), team).mean()
        base = run_episode(World(scenario, seed=seed), greedy).mean()
        diffs.append(float(ours - base))
    diffs = np.array(diffs)
    sem = diffs.std(ddof=1) / math.sqrt(len(diffs))
    return float(diffs.mean()), 2.0 * float(sem)


class TestTrainingPipelines:
    def test_c08_preference_weights_beat_greedy_on_overlap(self):
        t0 = time.perf_counter()
        base = resolve_scenario("validation-e")
        train_scen = dataclasses.replace(base, episode_length=120,
                                         vertices_per_ellipse=32)
        result = esto.train("esto", train_scen, generations=50, runs=10,
                            seed=0)
        team = [PreferencePolicy(result.model)
                for _ in range(base.n_radars)]
        diff, two_sem = _paired_margin(base, team, range(100, 116))
        elapsed = time.perf_counter() - t0
        record_criterion(
            8, f"diff {diff:+.4f} vs 2*SEM {two_sem:.4f}, "
               f"{elapsed / 60:.1f} min")
        assert elapsed < 1800
        assert diff > two_sem

    def test_c09_communication_variant_beats_greedy_stacked(self):
        t0 = time.perf_counter()
        base = resolve_scenario("stacked-2")
        train_scen = dataclasses.replace(base, episode_length=100,
                                         vertices_per_ellipse=32)
        result = esto.train("esto-m", train_scen, generations=35, runs=8,
                            seed=1)
        team = [PreferencePolicy(result.model)
                for _ in range(base.n_radars)]
        diff, two_sem = _paired_margin(base, team, range(200, 216))
        elapsed = time.perf_counter() - t0
        record_criterion(
            9, f"diff {diff:+.4f} vs 2*SEM {two_sem:.4f}, "
               f"{elapsed / 60:.1f} min")
        assert elapsed < 1800
        assert diff > two_sem

    def test_c10_actor_critic_learning_signal(self):
        base = resolve_scenario("training-3x20")
        train_scen = dataclasses.replace(base, episode_length=120,
                                         vertices_per_ellipse=32)
        result = ppo.train_rl(train_scen, iterations=20, episodes=4,
                              seed=0, lr=1e-3)
        utilities = np.array([row["mean_utility"] for row in result.history])
        slope = float(np.polyfit(np.arange(len(utilities)), utilities, 1)[0])

        team = [ppo.NeuralPolicy(result.actor, mode="greedy")
                for _ in range(base.n_radars)]
        greedy = [GreedyBaseline() for _ in range(base.n_radars)]
        seeds = range(100, 108)
        ours = np.array([run_episode(World(base, seed=s), team).mean()
                         for s in seeds])
        base_u = np.array([run_episode(World(base, seed=s), greedy).mean()
                           for s in seeds])
        sem = base_u.std(ddof=1) / math.sqrt(len(seeds))
        strict = bool(ours.mean() > base_u.mean())
        record_criterion(
            10, f"slope {slope:+.5f}, final {ours.mean():.4f} vs baseline "
                f"{base_u.mean():.4f} (SEM {sem:.4f}), "
                f"strictly better: {strict}")
        assert slope > 0
        assert ours.mean() >= base_u.mean() - sem


# -- simulation invariant suite -----------------------------------------------

class _FuzzPolicy(AllocationPolicy):
    """Random feasible subsets; occasionally returns an over-budget
    allocation on purpose to exercise the world's rejection path."""

    name = "fuzz"

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def decide(self, obs, radar_id, budget, costs):
        m = len(costs)
        if self.rng.random() < 0.08:
            return make_allocation(radar_id, range(m), costs)
        chosen, spent = [], 0.0
        for j in self.rng.permutation(np.flatnonzero(obs.fov_mask)):
            if self.rng.random() < 0.5:
                continue
            if spent + costs[j] <= budget + 1e-12:
                chosen.append(int(j))
                spent += float(costs[j])
        return make_allocation(radar_id, chosen, costs)


def _random_fuzz_scenario(rng, idx: int) -> Scenario:
    n = int(rng.integers(1, 4))
    radars = tuple(
        RadarSpec(position=(float(rng.uniform(4, 16)),
                            float(rng.uniform(4, 16))),
                  budget=float(rng.uniform(2.0, 4.0)),
                  fov_range=float(rng.uniform(9.0, 15.0)),
                  fov_halfwidth_deg=float(rng.choice([180.0, 120.0, 90.0])),
                  facing_deg=float(rng.uniform(-180.0, 180.0)))
        for _ in range(n))
    return Scenario(
        name=f"fuzz-{idx}", bounds=(0.0, 0.0, 20.0, 20.0), radars=radars,
        n_targets=int(rng.integers(2, 9)),
        cost_model=str(rng.choice(["unit", "range4"])),
        process_noise_q=float(rng.uniform(0.02, 0.1)),
        meas_noise_sigma=float(rng.uniform(0.3, 0.8)),
        area_scale=float(rng.uniform(1.0, 6.0)),
        vertices_per_ellipse=16)


def _invariant_trials(scenario: Scenario, seed: int, n_steps: int) -> int:
    world = World(scenario, seed=seed)
    policies = [_FuzzPolicy(seed * 101 + i)
                for i in range(scenario.n_radars)]
    max_turn = math.radians(scenario.max_turn_deg) + 1e-12
    x0, y0, x1, y1 = scenario.bounds
    trials = 0
    for _ in range(n_steps):
        pre_headings = world.headings.copy()
        _, pred_covs = tracking.predict_means_covs(world.means, world.covs,
                                                   world.kalman)
        record = world.step(policies)

        assert 0.0 < record.utility <= 1.0
        trials += 1

        for i, alloc in enumerate(world.last_allocations):
            assert alloc.total_cost <= world.budgets[i] + 1e-9
            trials += 1

        pos = world.positions
        # respawned targets re-enter exactly on the boundary
        respawned = ((pos[:, 0] == x0) | (pos[:, 0] == x1)
                     | (pos[:, 1] == y0) | (pos[:, 1] == y1))
        turned = np.abs(np.angle(np.exp(1j * (world.headings
                                              - pre_headings))))
        assert np.all(turned[~respawned] <= max_turn)
        trials += scenario.n_targets

        eigenvalues = np.linalg.eigvalsh(world.covs)
        assert np.all(eigenvalues > 0.0)
        trials += world.covs.shape[0] * world.covs.shape[1]

        measured = (world.steps_since == 0) & ~respawned[None, :]
        gap = np.linalg.eigvalsh(pred_covs - world.covs)
        assert np.all(gap[measured] >= -1e-9)
        untouched = ~measured & ~respawned[None, :]
        assert np.allclose(world.covs[untouched], pred_covs[untouched],
                           rtol=0.0, atol=1e-12)
        trials += measured.size
    return trials


def _determinism_trials(scenario: Scenario, seed: int, n_steps: int) -> int:
    worlds = [World(scenario, seed=seed) for _ in range(2)]
    teams = [[_FuzzPolicy(9000 + i) for i in range(scenario.n_radars)]
             for _ in range(2)]
    trials = 0
    for _ in range(n_steps):
        snaps = []
        for world, team in zip(worlds, teams):
            world.step(team)
            snaps.append(world.snapshot())
        for key, value in snaps[0].items():
            if isinstance(value, np.ndarray):
                assert np.array_equal(value, snaps[1][key])
            else:
                assert value == snaps[1][key]
        trials += 1
    return trials


class TestSimulationInvariants:
    def test_c11_invariants_over_randomized_trials(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(111)
        trials = 0
        for idx in range(14):
            scenario = _random_fuzz_scenario(rng, idx)
            trials += _invariant_trials(scenario, seed=1000 + idx,
                                        n_steps=45)
        for idx in range(6):
            scenario = _random_fuzz_scenario(rng, 100 + idx)
            trials += _determinism_trials(scenario, seed=2000 + idx,
                                          n_steps=25)
        elapsed = time.perf_counter() - t0
        record_criterion(11, f"{trials} trials, {elapsed:.1f}s")
        assert trials >= 10_000
        assert elapsed < 300
