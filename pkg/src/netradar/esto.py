"""Evolution-strategy-trained target allocation (with optional messaging).

Each radar scores every target with a linear function of a small feature
subset and fills its budget greedily by score.  The score weights are the
only trainable parameters and are optimized with CMA-ES against the mean
simulation utility.  The base variant ("esto") uses eight local features
plus a constant; the messaging variant ("esto-m") appends the two shared
previous-step utility summaries, so radars can react to what the network
as a whole achieved per target.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import features
from .cmaes import cmaes_optimize
from .policy import AllocationPolicy, make_allocation, budgeted_fill
from .world import Scenario, World

SCHEMA_VERSION = 1

ESTO_FEATURES = (
    features.RANGE,
    features.SPEED,
    features.CLOSING_SPEED,
    features.OWN_AREA,
    features.STALENESS,
    features.BUDGET_SLACK,
    features.OTHER_DIST,
    features.OTHER_COVERAGE,
    features.CONSTANT,
)
ESTO_M_FEATURES = ESTO_FEATURES + (
    features.EST_UTILITY,
    features.EST_UTILITY_DELTA,
)

VARIANT_FEATURES = {"esto": ESTO_FEATURES, "esto-m": ESTO_M_FEATURES}


class EstoError(ValueError):
    pass


@dataclass(frozen=True)
class PreferenceModel:
    """Linear scorer: weights over a fixed subset of observation columns."""

    weights: np.ndarray
    feature_indices: tuple[int, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "feature_indices",
                           tuple(int(i) for i in self.feature_indices))
        if w.size != len(self.feature_indices):
            raise EstoError(
                f"{w.size} weights for {len(self.feature_indices)} features")
        for i in self.feature_indices:
            if i != features.CONSTANT and not 0 <= i < features.NUM_FEATURES:
                raise EstoError(f"feature index {i} out of range")

    @property
    def dim(self) -> int:
        return self.weights.size

    @property
    def variant(self) -> str:
        for name, idx in VARIANT_FEATURES.items():
            if self.feature_indices == idx:
                return name
        return "custom"


def model_for_variant(variant: str, weights) -> PreferenceModel:
    if variant not in VARIANT_FEATURES:
        raise EstoError(f"unknown variant {variant!r}; expected esto or esto-m")
    return PreferenceModel(weights=weights, feature_indices=VARIANT_FEATURES[variant])


def indices_for_dim(d: int) -> tuple[int, ...]:
    for idx in VARIANT_FEATURES.values():
        if len(idx) == d:
            return idx
    raise EstoError(f"no variant has dimension {d}; expected 9 or 11")


def feature_matrix(model: PreferenceModel, obs) -> np.ndarray:
    """Gather the model's feature columns from an observation matrix;
    the constant index contributes a column of ones."""
    m = obs.rows.shape[0]
    cols = np.empty((m, model.dim))
    for k, idx in enumerate(model.feature_indices):
        cols[:, k] = 1.0 if idx == features.CONSTANT else obs.rows[:, idx]
    return cols


def preference_scores(model: PreferenceModel, obs) -> np.ndarray:
    """Per-target linear score; higher means tracked first."""
    return feature_matrix(model, obs) @ model.weights


def select_by_score(scores, fov_mask, costs, budget: float,
                    radar_id: int = 0):
    """Greedy budgeted selection by descending score, ties by target id."""
    scores = np.asarray(scores, dtype=np.float64)
    m = scores.size
    order = np.lexsort((np.arange(m), -scores))
    chosen = budgeted_fill(order, costs, budget, np.asarray(fov_mask, dtype=bool))
    return make_allocation(radar_id, chosen, costs)


@dataclass
class PreferencePolicy(AllocationPolicy):
    """Allocation policy wrapping a preference model."""

    model: PreferenceModel
    name: str = "esto"

    def decide(self, obs, radar_id, budget, costs):
        scores = preference_scores(self.model, obs)
        return select_by_score(scores, obs.fov_mask, costs, budget, radar_id)


def episode_mean_utility(model: PreferenceModel, scenario: Scenario, seed: int,
                         n_steps: int | None = None) -> float:
    world = World(scenario, seed)
    policy = PreferencePolicy(model)
    policies = [policy] * scenario.n_radars
    steps = scenario.episode_length if n_steps is None else n_steps
    total = 0.0
    for _ in range(steps):
        total += world.step(policies).utility
    return total / steps


def fitness(weights, scenario: Scenario, runs: int, seeds=None,
            feature_indices=None) -> float:
    """Mean over seeded runs of the episode-mean utility with all radars
    driven by the same preference model."""
    if runs < 1:
        raise EstoError(f"runs must be >= 1, got {runs}")
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if feature_indices is None:
        feature_indices = indices_for_dim(weights.size)
    model = PreferenceModel(weights=weights, feature_indices=tuple(feature_indices))
    if seeds is None:
        seeds = range(runs)
    seeds = [int(s) for s in seeds]
    if len(seeds) != runs:
        raise EstoError(f"got {len(seeds)} seeds for {runs} runs")
    total = 0.0
    for k, seed in enumerate(seeds):
        try:
            total += episode_mean_utility(model, scenario, seed)
        except Exception as exc:
            raise EstoError(f"run {k} (seed {seed}) failed: {exc}") from exc
    return total / runs


def _fitness_worker(args):
    weights, scenario_dict, runs, seeds, feature_indices = args
    scenario = Scenario.from_dict(scenario_dict)
    return fitness(weights, scenario, runs, seeds, feature_indices)


def n_jobs_from_env() -> int:
    raw = os.environ.get("NETRADAR_JOBS", "1")
    try:
        jobs = int(raw)
    except ValueError:
        raise EstoError(f"NETRADAR_JOBS must be an integer, got {raw!r}") from None
    return max(1, jobs)


@dataclass(frozen=True)
class TrainingResult:
    model: PreferenceModel
    history: dict
    variant: str
    scenario_name: str
    scenario_hash: str
    generations: int
    runs: int
    seed: int


def scenario_hash(scenario: Scenario) -> str:
    text = json.dumps(scenario.to_dict(), sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def train(variant: str, scenario: Scenario, generations: int, runs: int = 10,
          seed: int = 0, lam: int | None = None, sigma0: float = 0.5,
          n_jobs: int | None = None, callback=None) -> TrainingResult:
    """Optimize preference weights with CMA-ES on a scenario.

    All candidates of one generation share the same episode seeds (common
    random numbers), and the seed set rotates across generations so weights
    cannot overfit a single draw of trajectories.
    """
    indices = VARIANT_FEATURES.get(variant)
    if indices is None:
        raise EstoError(f"unknown variant {variant!r}; expected esto or esto-m")
    d = len(indices)
    jobs = n_jobs_from_env() if n_jobs is None else max(1, int(n_jobs))
    scen_dict = scenario.to_dict()
    gen_counter = [0]
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        def batch_objective(candidates):
            gen = gen_counter[0]
            gen_counter[0] += 1
            seeds = np.random.default_rng([seed, gen]).integers(
                0, 2**31 - 1, size=runs).tolist()
            if pool is None:
                return [fitness(x, scenario, runs, seeds, indices)
                        for x in candidates]
            args = [(np.asarray(x), scen_dict, runs, seeds, indices)
                    for x in candidates]
            return list(pool.map(_fitness_worker, args))

        best, history = cmaes_optimize(
            None, d=d, sigma0=sigma0, generations=generations, lam=lam,
            seed=seed, batch_objective=batch_objective, callback=callback)
    finally:
        if pool is not None:
            pool.shutdown()
    model = PreferenceModel(weights=best, feature_indices=indices)
    return TrainingResult(model=model, history=history, variant=variant,
                          scenario_name=scenario.name,
                          scenario_hash=scenario_hash(scenario),
                          generations=generations, runs=runs, seed=seed)


def save_weights(result: TrainingResult, path):
    payload = {
        "schema_version": SCHEMA_VERSION,
        "variant": result.variant,
        "d": result.model.dim,
        "feature_indices": list(result.model.feature_indices),
        "weights": [repr(float(w)) for w in result.model.weights],
        "scenario_name": result.scenario_name,
        "scenario_hash": result.scenario_hash,
        "generations": result.generations,
        "runs": result.runs,
        "seed": result.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_weights(path) -> tuple[PreferenceModel, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    for key in ("variant", "d", "feature_indices", "weights"):
        if key not in payload:
            raise EstoError(f"{path}: missing field {key!r}")
    weights = np.array([float(w) for w in payload["weights"]])
    indices = tuple(payload["feature_indices"])
    if payload["d"] != weights.size:
        raise EstoError(f"{path}: d={payload['d']} but {weights.size} weights")
    model = PreferenceModel(weights=weights, feature_indices=indices)
    if payload["variant"] in VARIANT_FEATURES and model.variant != payload["variant"]:
        raise EstoError(
            f"{path}: feature indices do not match variant {payload['variant']!r}")
    return model, payload
