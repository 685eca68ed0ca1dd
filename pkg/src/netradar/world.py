"""Networked-radar simulation: scenario configs, world state, and the step loop.

A scenario fixes the static layout (radar positions, budgets, fields of view,
target population, noise constants). A :class:`World` holds the mutable state:
true target kinematics, one Kalman track per radar-target pair, previous-step
allocations, and the shared per-target summaries that radars exchange between
steps. One call to :func:`step` runs a full decision round:

1. radars are visited in a seeded random order; each computes its allocation
   from its own observation matrix (allocations of earlier radars this step
   are visible only through the committed-budget feature),
2. every track is propagated through the motion model,
3. each radar measures its allocated targets that lie inside its true field
   of view and updates those tracks,
4. targets move with heading jitter; targets leaving the region are replaced
   by fresh ones entering at the boundary,
5. the network utility is computed from the intersection of all radars'
   confidence ellipses per target, and shared summaries are refreshed.

Infeasible allocations are replaced by empty ones and logged, never repaired.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from importlib import resources

import numpy as np

from . import features, geometry, tracking
from .policy import Allocation, empty_allocation, validate_allocation

TWO_PI = 2.0 * math.pi


class ScenarioError(ValueError):
    pass


class WorldError(RuntimeError):
    pass


def _require(cond: bool, msg: str):
    if not cond:
        raise ScenarioError(msg)


@dataclass(frozen=True)
class RadarSpec:
    """Static description of one radar."""

    position: tuple[float, float]
    budget: float = 4.0
    fov_range: float = 14.0
    fov_halfwidth_deg: float = 180.0
    facing_deg: float = 0.0

    def validate(self, label: str):
        _require(len(self.position) == 2 and all(math.isfinite(c) for c in self.position),
                 f"{label}.position: must be two finite numbers")
        _require(self.budget > 0, f"{label}.budget: must be positive")
        _require(self.fov_range > 0, f"{label}.fov_range: must be positive")
        _require(0 < self.fov_halfwidth_deg <= 180.0,
                 f"{label}.fov_halfwidth_deg: must be in (0, 180]")
        _require(math.isfinite(self.facing_deg), f"{label}.facing_deg: must be finite")


@dataclass(frozen=True)
class TargetSpec:
    """Explicit initial target; used when a scenario pins starting states."""

    position: tuple[float, float]
    speed: float
    heading_deg: float

    def validate(self, label: str):
        _require(len(self.position) == 2 and all(math.isfinite(c) for c in self.position),
                 f"{label}.position: must be two finite numbers")
        _require(self.speed >= 0, f"{label}.speed: must be >= 0")
        _require(math.isfinite(self.heading_deg), f"{label}.heading_deg: must be finite")


_COST_MODELS = ("unit", "range4")


@dataclass(frozen=True)
class Scenario:
    """Full static configuration of a simulation."""

    name: str
    bounds: tuple[float, float, float, float]
    radars: tuple[RadarSpec, ...]
    n_targets: int
    speed_range: tuple[float, float] = (0.2, 0.5)
    targets: tuple[TargetSpec, ...] | None = None
    episode_length: int = 300
    cost_model: str = "unit"
    range4_ref: float = 10.0
    process_noise_q: float = 0.05
    meas_noise_sigma: float = 0.5
    dt: float = 1.0
    scale_k: float = 2.0
    area_scale: float = 1.0
    area_cap: float = 50.0
    max_turn_deg: float = 15.0
    spawn_cone_deg: float = 60.0
    vertices_per_ellipse: int = 64
    description: str = ""
    schema_version: int = 1

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        object.__setattr__(self, "radars", tuple(self.radars))
        object.__setattr__(self, "speed_range", tuple(float(s) for s in self.speed_range))
        if self.targets is not None:
            object.__setattr__(self, "targets", tuple(self.targets))
        self.validate()

    def validate(self):
        _require(bool(self.name), "name: must be non-empty")
        _require(len(self.bounds) == 4, "bounds: must be (x0, y0, x1, y1)")
        x0, y0, x1, y1 = self.bounds
        _require(x1 > x0 and y1 > y0, "bounds: must have positive width and height")
        _require(len(self.radars) >= 1, "radars: need at least one radar")
        for k, r in enumerate(self.radars):
            r.validate(f"radars[{k}]")
        _require(self.n_targets >= 1, "n_targets: must be >= 1")
        lo, hi = self.speed_range
        _require(0 <= lo <= hi, "speed_range: must satisfy 0 <= lo <= hi")
        if self.targets is not None:
            _require(len(self.targets) == self.n_targets,
                     f"targets: expected {self.n_targets} entries, got {len(self.targets)}")
            for k, t in enumerate(self.targets):
                t.validate(f"targets[{k}]")
        _require(self.episode_length >= 1, "episode_length: must be >= 1")
        _require(self.cost_model in _COST_MODELS,
                 f"cost_model: must be one of {_COST_MODELS}, got {self.cost_model!r}")
        _require(self.range4_ref > 0, "range4_ref: must be positive")
        _require(self.process_noise_q >= 0, "process_noise_q: must be >= 0")
        _require(self.meas_noise_sigma > 0, "meas_noise_sigma: must be positive")
        _require(self.dt > 0, "dt: must be positive")
        _require(self.scale_k > 0, "scale_k: must be positive")
        _require(self.area_scale > 0, "area_scale: must be positive")
        _require(self.area_cap > 0, "area_cap: must be positive")
        _require(0 <= self.max_turn_deg <= 180, "max_turn_deg: must be in [0, 180]")
        _require(0 <= self.spawn_cone_deg < 90, "spawn_cone_deg: must be in [0, 90)")
        _require(self.vertices_per_ellipse >= 8, "vertices_per_ellipse: must be >= 8")

    @property
    def n_radars(self) -> int:
        return len(self.radars)

    @property
    def kalman_config(self) -> tracking.KalmanConfig:
        return tracking.KalmanConfig(
            process_noise_q=self.process_noise_q,
            meas_noise_sigma=self.meas_noise_sigma,
            dt=self.dt,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bounds"] = list(self.bounds)
        d["speed_range"] = list(self.speed_range)
        d["radars"] = [
            {"position": list(r.position), "budget": r.budget, "fov_range": r.fov_range,
             "fov_halfwidth_deg": r.fov_halfwidth_deg, "facing_deg": r.facing_deg}
            for r in self.radars
        ]
        if self.targets is None:
            d.pop("targets")
        else:
            d["targets"] = [
                {"position": list(t.position), "speed": t.speed, "heading_deg": t.heading_deg}
                for t in self.targets
            ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("scenario: expected a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        _require(not unknown, f"unknown scenario fields: {sorted(unknown)}")
        for key in ("name", "bounds", "radars", "n_targets"):
            _require(key in d, f"{key}: missing required field")
        args = dict(d)
        try:
            args["radars"] = tuple(_radar_from_dict(r, f"radars[{k}]")
                                   for k, r in enumerate(d["radars"]))
        except TypeError as exc:
            raise ScenarioError(f"radars: {exc}") from exc
        if d.get("targets") is not None:
            args["targets"] = tuple(_target_from_dict(t, f"targets[{k}]")
                                    for k, t in enumerate(d["targets"]))
        args["bounds"] = tuple(d["bounds"])
        if "speed_range" in d:
            args["speed_range"] = tuple(d["speed_range"])
        return cls(**args)


def _radar_from_dict(r: dict, label: str) -> RadarSpec:
    if not isinstance(r, dict):
        raise ScenarioError(f"{label}: expected an object")
    unknown = set(r) - set(RadarSpec.__dataclass_fields__)
    _require(not unknown, f"{label}: unknown fields {sorted(unknown)}")
    _require("position" in r, f"{label}.position: missing required field")
    args = dict(r)
    args["position"] = tuple(r["position"])
    return RadarSpec(**args)


def _target_from_dict(t: dict, label: str) -> TargetSpec:
    if not isinstance(t, dict):
        raise ScenarioError(f"{label}: expected an object")
    unknown = set(t) - set(TargetSpec.__dataclass_fields__)
    _require(not unknown, f"{label}: unknown fields {sorted(unknown)}")
    for key in ("position", "speed", "heading_deg"):
        _require(key in t, f"{label}.{key}: missing required field")
    args = dict(t)
    args["position"] = tuple(t["position"])
    return TargetSpec(**args)


def load_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return Scenario.from_dict(d)


def save_scenario_file(scenario: Scenario, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def bundled_scenario_names() -> list[str]:
    root = resources.files("netradar") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled_scenario(name: str) -> Scenario:
    root = resources.files("netradar") / "scenarios"
    entry = root / f"{name}.json"
    try:
        text = entry.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ScenarioError(
            f"unknown bundled scenario {name!r}; available: {bundled_scenario_names()}"
        ) from None
    return Scenario.from_dict(json.loads(text))


def resolve_scenario(ref: str) -> Scenario:
    """Accept either a bundled scenario name or a path to a JSON file."""
    if ref.endswith(".json"):
        return load_scenario_file(ref)
    return load_bundled_scenario(ref)


@dataclass(frozen=True)
class ObservationMatrix:
    """One radar's local view: feature rows plus the in-FOV mask."""

    rows: np.ndarray
    fov_mask: np.ndarray
    radar_id: int


def _wrap_angle(a):
    return (a + math.pi) % TWO_PI - math.pi


class World:
    """Mutable simulation state; advance it with :meth:`step`."""

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.kalman = scenario.kalman_config
        self._F, self._Q = tracking.transition_matrices(self.kalman)

        n = scenario.n_radars
        m = scenario.n_targets
        self.n_radars = n
        self.n_targets = m
        self.radar_pos = np.array([r.position for r in scenario.radars], dtype=np.float64)
        self.budgets = np.array([r.budget for r in scenario.radars], dtype=np.float64)
        self.fov_range = np.array([r.fov_range for r in scenario.radars], dtype=np.float64)
        self.fov_halfwidth = np.radians(
            [r.fov_halfwidth_deg for r in scenario.radars]).astype(np.float64)
        self.facing = np.radians([r.facing_deg for r in scenario.radars]).astype(np.float64)
        self._omni = self.fov_halfwidth >= math.pi - 1e-12

        x0, y0, x1, y1 = scenario.bounds
        if scenario.targets is not None:
            self.positions = np.array([t.position for t in scenario.targets], dtype=np.float64)
            self.speeds = np.array([t.speed for t in scenario.targets], dtype=np.float64)
            self.headings = np.radians([t.heading_deg for t in scenario.targets])
        else:
            self.positions = np.column_stack([
                self.rng.uniform(x0, x1, m),
                self.rng.uniform(y0, y1, m),
            ])
            self.headings = self.rng.uniform(-math.pi, math.pi, m)
            self.speeds = self.rng.uniform(scenario.speed_range[0], scenario.speed_range[1], m)

        # one track per radar-target pair, initialized from a noisy position
        z0 = self.positions[None, :, :] + self.kalman.meas_noise_sigma * \
            self.rng.standard_normal((n, m, 2))
        self.means = np.zeros((n, m, 4))
        self.means[:, :, :2] = z0
        self.covs = np.broadcast_to(np.diag(tracking.INIT_COV_DIAG), (n, m, 4, 4)).copy()
        self.steps_since = np.zeros((n, m), dtype=np.int64)

        self.last_allocations: list[Allocation] = [empty_allocation(i) for i in range(n)]
        self._last_alloc_costs = np.zeros(n)
        self.committed_costs = np.zeros(n)
        self.step_index = 0
        self.event_log: list[str] = []
        self.view_trace: dict[int, tuple[frozenset, ...]] = {}

        areas0 = self._intersection_areas()
        self.prev_inter_areas = areas0
        self.exp_util_prev = np.exp(-areas0 / scenario.area_scale)
        self.exp_util_prev2 = self.exp_util_prev.copy()

        self._length_scale = 0.5 * math.hypot(x1 - x0, y1 - y0)
        v = max(scenario.speed_range[1], float(self.speeds.max(initial=0.0)), 1e-6)
        L, cap = self._length_scale, scenario.area_cap
        self._scales = np.array([
            L, L, L, 1.0, 1.0, v, v, v, v,
            cap, cap, math.log1p(cap), features.STALENESS_CAP,
            1.0, 1.0, 1.0, L, L, L, 1.0, 1.0, 1.0, 1.0,
        ])
        self._total_budget = float(self.budgets.sum())
        self._obs_cache = None

    # -- geometry ---------------------------------------------------------

    def _intersection_areas(self) -> np.ndarray:
        """Per-target area of the intersection of every radar's ellipse."""
        k = self.scenario.scale_k
        transforms = k * geometry.spd_sqrt_2x2(self.covs[:, :, :2, :2])
        centers = np.ascontiguousarray(self.means[:, :, :2].transpose(1, 0, 2))
        transforms = np.ascontiguousarray(transforms.transpose(1, 0, 2, 3))
        return geometry.intersection_areas_batch(
            centers, transforms, self.scenario.vertices_per_ellipse)

    def utility_record(self) -> geometry.UtilityRecord:
        """Utility of the current tracks (also computed at the end of step)."""
        return geometry.utility_record(self._intersection_areas(), self.scenario.area_scale)

    # -- fields of view and costs -----------------------------------------

    def fov_contains(self, radar_id: int, points) -> np.ndarray:
        """Vectorized FOV membership test for an array of points (..., 2)."""
        pts = np.asarray(points, dtype=np.float64)
        rel = pts - self.radar_pos[radar_id]
        dist = np.hypot(rel[..., 0], rel[..., 1])
        inside = dist <= self.fov_range[radar_id]
        if not self._omni[radar_id]:
            ang = np.arctan2(rel[..., 1], rel[..., 0])
            dang = np.abs(_wrap_angle(ang - self.facing[radar_id]))
            inside &= dang <= self.fov_halfwidth[radar_id]
        return inside

    def costs_for(self, radar_id: int) -> np.ndarray:
        """Per-target tracking cost as seen by one radar (its own estimates)."""
        if self.scenario.cost_model == "unit":
            return np.ones(self.n_targets)
        rel = self.means[radar_id, :, :2] - self.radar_pos[radar_id]
        r = np.hypot(rel[:, 0], rel[:, 1])
        c = (r / self.scenario.range4_ref) ** 4
        return np.clip(c, 0.1, self.budgets[radar_id])

    def _all_costs(self) -> np.ndarray:
        if self.scenario.cost_model == "unit":
            return np.ones((self.n_radars, self.n_targets))
        rel = self.means[:, :, :2] - self.radar_pos[:, None, :]
        r = np.hypot(rel[:, :, 0], rel[:, :, 1])
        c = (r / self.scenario.range4_ref) ** 4
        return np.clip(c, 0.1, self.budgets[:, None])

    # -- observations ------------------------------------------------------

    def _build_obs_block(self):
        """(n, m, 23) scaled feature block for all radars at once.

        Everything except the committed-budget fraction is constant within a
        step (tracks only change after all decisions are made), so the block
        is cached and the committed fraction patched per call.
        """
        n, m = self.n_radars, self.n_targets
        F = features
        raw = np.zeros((n, m, F.NUM_FEATURES))

        pos = self.means[:, :, :2]
        vel = self.means[:, :, 2:]
        rel = pos - self.radar_pos[:, None, :]
        rngs = np.hypot(rel[:, :, 0], rel[:, :, 1])
        safe = np.maximum(rngs, 1e-12)
        raw[:, :, F.REL_X] = rel[:, :, 0]
        raw[:, :, F.REL_Y] = rel[:, :, 1]
        raw[:, :, F.RANGE] = rngs
        raw[:, :, F.BEARING_SIN] = rel[:, :, 1] / safe
        raw[:, :, F.BEARING_COS] = rel[:, :, 0] / safe
        raw[:, :, F.VEL_X] = vel[:, :, 0]
        raw[:, :, F.VEL_Y] = vel[:, :, 1]
        raw[:, :, F.SPEED] = np.hypot(vel[:, :, 0], vel[:, :, 1])
        raw[:, :, F.CLOSING_SPEED] = -(rel * vel).sum(axis=2) / safe

        pcov = self.covs[:, :, :2, :2]
        raw[:, :, F.POS_COV_TRACE] = pcov[:, :, 0, 0] + pcov[:, :, 1, 1]
        det = np.clip(pcov[:, :, 0, 0] * pcov[:, :, 1, 1]
                      - pcov[:, :, 0, 1] * pcov[:, :, 1, 0], 0.0, None)
        k2 = self.scenario.scale_k**2
        cap = self.scenario.area_cap
        raw[:, :, F.OWN_AREA] = np.minimum(math.pi * k2 * np.sqrt(det), cap)
        raw[:, :, F.LOG_PREV_INTER] = np.log1p(np.minimum(self.prev_inter_areas, cap))
        raw[:, :, F.STALENESS] = np.minimum(self.steps_since, F.STALENESS_CAP)

        fov = self._fov_mask_est(rel, rngs)
        raw[:, :, F.IN_FOV] = fov

        raw[:, :, F.BUDGET_SLACK] = \
            ((self.budgets - self._last_alloc_costs) / self.budgets)[:, None]
        costs = self._all_costs()
        raw[:, :, F.COST_NORM] = costs / self.budgets[:, None]

        if self.n_radars > 1:
            # distance/offset from each estimated position to the closest
            # other radar, and how many other FOVs cover that estimate
            diff = self.radar_pos[None, None, :, :] - pos[:, :, None, :]
            dists = np.hypot(diff[:, :, :, 0], diff[:, :, :, 1])
            eye = np.eye(n, dtype=bool)
            masked = np.where(eye[:, None, :], np.inf, dists)
            idx = np.argmin(masked, axis=2)
            ii, jj = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
            raw[:, :, F.OTHER_DIST] = masked[ii, jj, idx]
            raw[:, :, F.OTHER_REL_X] = diff[ii, jj, idx, 0]
            raw[:, :, F.OTHER_REL_Y] = diff[ii, jj, idx, 1]

            within = dists <= self.fov_range[None, None, :]
            narrow = ~self._omni
            if narrow.any():
                ang = np.arctan2(-diff[:, :, :, 1], -diff[:, :, :, 0])
                dang = np.abs(_wrap_angle(ang - self.facing[None, None, :]))
                within &= self._omni[None, None, :] | (dang <= self.fov_halfwidth)
            within &= ~eye[:, None, :]
            raw[:, :, F.OTHER_COVERAGE] = within.sum(axis=2) / (n - 1)
        else:
            raw[:, :, F.OTHER_DIST] = 2.0 * self._length_scale

        raw[:, :, F.COMMITTED_FRAC] = self.committed_costs.sum() / self._total_budget
        raw[:, :, F.EST_UTILITY] = self.exp_util_prev[None, :]
        raw[:, :, F.EST_UTILITY_DELTA] = (self.exp_util_prev - self.exp_util_prev2)[None, :]

        raw /= self._scales
        return raw, fov, costs

    def _fov_mask_est(self, rel, rngs) -> np.ndarray:
        inside = rngs <= self.fov_range[:, None]
        narrow = ~self._omni
        if narrow.any():
            ang = np.arctan2(rel[:, :, 1], rel[:, :, 0])
            dang = np.abs(_wrap_angle(ang - self.facing[:, None]))
            inside &= self._omni[:, None] | (dang <= self.fov_halfwidth[:, None])
        return inside

    def _obs_block(self):
        if self._obs_cache is None:
            self._obs_cache = self._build_obs_block()
        return self._obs_cache

    def observe(self, radar_id: int) -> ObservationMatrix:
        """This radar's m x 23 observation matrix and in-FOV mask."""
        if not 0 <= radar_id < self.n_radars:
            raise WorldError(f"radar_id {radar_id} out of range")
        block, fov, _ = self._obs_block()
        rows = block[radar_id].copy()
        rows[:, features.COMMITTED_FRAC] = \
            self.committed_costs.sum() / self._total_budget
        return ObservationMatrix(rows=rows, fov_mask=fov[radar_id].copy(),
                                 radar_id=radar_id)

    # -- stepping -----------------------------------------------------------

    def step(self, policies) -> geometry.UtilityRecord:
        """Run one decision round; returns the utility after the round."""
        if len(policies) != self.n_radars:
            raise WorldError(
                f"need {self.n_radars} policies, got {len(policies)}")
        scen = self.scenario
        n, m = self.n_radars, self.n_targets
        block, fov, costs = self._obs_block()

        order = self.rng.permutation(n)
        self.committed_costs[:] = 0.0
        view_trace: dict[int, tuple[frozenset, ...]] = {}
        allocs: list[Allocation | None] = [None] * n
        for i in order:
            i = int(i)
            obs = ObservationMatrix(rows=block[i].copy(), fov_mask=fov[i].copy(),
                                    radar_id=i)
            obs.rows[:, features.COMMITTED_FRAC] = \
                self.committed_costs.sum() / self._total_budget
            view_trace[i] = tuple(a.target_set for a in self.last_allocations)
            alloc = policies[i].decide(obs, i, float(self.budgets[i]), costs[i].copy())
            if (not isinstance(alloc, Allocation) or alloc.radar_id != i
                    or not validate_allocation(alloc, float(self.budgets[i]), costs[i])):
                self.event_log.append(
                    f"step {self.step_index}: radar {i} returned an infeasible "
                    f"allocation; replaced with empty")
                alloc = empty_allocation(i)
            allocs[i] = alloc
            self.last_allocations[i] = alloc
            self._last_alloc_costs[i] = alloc.total_cost
            self.committed_costs[i] = alloc.total_cost
        self.view_trace = view_trace

        self.means, self.covs = tracking.predict_means_covs(
            self.means, self.covs, self.kalman)
        self.steps_since += 1

        sigma = self.kalman.meas_noise_sigma
        for i in order:
            i = int(i)
            chosen = sorted(allocs[i].target_set)
            if not chosen:
                continue
            visible = self.fov_contains(i, self.positions[chosen])
            js = [j for j, v in zip(chosen, visible) if v]
            if not js:
                continue
            zs = self.positions[js] + sigma * self.rng.standard_normal((len(js), 2))
            self.means[i, js], self.covs[i, js] = tracking.update_means_covs(
                self.means[i, js], self.covs[i, js], zs, self.kalman)
            self.steps_since[i, js] = 0

        max_turn = math.radians(scen.max_turn_deg)
        self.headings = _wrap_angle(
            self.headings + self.rng.uniform(-max_turn, max_turn, m))
        self.positions = self.positions + scen.dt * self.speeds[:, None] * \
            np.column_stack([np.cos(self.headings), np.sin(self.headings)])
        x0, y0, x1, y1 = scen.bounds
        outside = ((self.positions[:, 0] < x0) | (self.positions[:, 0] > x1)
                   | (self.positions[:, 1] < y0) | (self.positions[:, 1] > y1))
        for j in np.flatnonzero(outside):
            self._respawn(int(j))

        areas = self._intersection_areas()
        record = geometry.utility_record(areas, scen.area_scale)
        exp_now = np.exp(-areas / scen.area_scale)
        # replaced targets start with a zero utility delta next step
        self.exp_util_prev2 = np.where(outside, exp_now, self.exp_util_prev)
        self.exp_util_prev = exp_now
        self.prev_inter_areas = areas
        self.step_index += 1
        self._obs_cache = None
        return record

    def _respawn(self, j: int):
        """Replace target j with a fresh one entering at the boundary."""
        scen = self.scenario
        x0, y0, x1, y1 = scen.bounds
        w, h = x1 - x0, y1 - y0
        u = self.rng.uniform(0.0, 2.0 * (w + h))
        if u < w:
            point, normal = (x0 + u, y0), 0.5 * math.pi
        elif u < w + h:
            point, normal = (x1, y0 + (u - w)), math.pi
        elif u < 2 * w + h:
            point, normal = (x1 - (u - w - h), y1), -0.5 * math.pi
        else:
            point, normal = (x0, y1 - (u - 2 * w - h)), 0.0
        cone = math.radians(scen.spawn_cone_deg)
        self.positions[j] = point
        self.headings[j] = _wrap_angle(normal + self.rng.uniform(-cone, cone))
        self.speeds[j] = self.rng.uniform(scen.speed_range[0], scen.speed_range[1])
        z = np.asarray(point) + self.kalman.meas_noise_sigma * \
            self.rng.standard_normal((self.n_radars, 2))
        self.means[:, j, :] = 0.0
        self.means[:, j, :2] = z
        self.covs[:, j] = np.diag(tracking.INIT_COV_DIAG)
        self.steps_since[:, j] = 0

    # -- introspection -------------------------------------------------------

    def snapshot(self) -> dict:
        """Copies of all mutable state, for determinism and regression checks."""
        return {
            "step_index": self.step_index,
            "positions": self.positions.copy(),
            "headings": self.headings.copy(),
            "speeds": self.speeds.copy(),
            "means": self.means.copy(),
            "covs": self.covs.copy(),
            "steps_since": self.steps_since.copy(),
            "prev_inter_areas": self.prev_inter_areas.copy(),
            "exp_util_prev": self.exp_util_prev.copy(),
            "exp_util_prev2": self.exp_util_prev2.copy(),
            "committed_costs": self.committed_costs.copy(),
            "allocations": tuple(a.target_set for a in self.last_allocations),
        }


def load_scenario(scenario: Scenario, seed: int) -> World:
    """Instantiate the mutable world for a scenario with a seeded generator."""
    return World(scenario, seed)


def step(world: World, policies) -> tuple[World, geometry.UtilityRecord]:
    """Advance the world one decision round (mutates and returns it)."""
    record = world.step(policies)
    return world, record


def run_episode(world: World, policies, n_steps: int | None = None):
    """Run a full episode; returns the per-step utility array."""
    if n_steps is None:
        n_steps = world.scenario.episode_length
    utils = np.empty(n_steps)
    for t in range(n_steps):
        utils[t] = world.step(policies).utility
    return utils
