"""Finite decentralized POMDPs with subset actions, and their sequential
(one-target-at-a-time) reformulation.

A base process has n agents that each pick a subset of m targets per step.
The sequential lift replaces the subset choice by micro-steps: an agent adds
one not-yet-selected target at a time or plays the stop action; when every
agent plays stop in the same micro-step, the accumulated selections drive
one base transition (with the base reward) and the selections reset.  A stop
is absorbing within a round: an agent that has stopped keeps playing stop
until the round completes.

``transpose`` maps a sequential policy to the equivalent subset policy by
summing over selection orders; ``invert`` constructs a sequential preimage
for any subset policy, so the two policy classes reach the same values.
``value`` and ``value_lifted`` evaluate reactive (observation-conditioned)
policies exactly by enumeration, which keeps both mappings machine-checkable
on small instances.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from collections import defaultdict

import numpy as np

PROB_TOL = 1e-12
MAX_TARGETS_EXACT = 8  # factorial enumeration guard for transpose/invert
MAX_VALUE_WORK = 10_000_000

# sentinel for the stop action; in array form it occupies column m
STOP = -1


class SeqDecError(ValueError):
    pass


def subset_members(mask: int) -> tuple[int, ...]:
    return tuple(j for j in range(mask.bit_length()) if mask >> j & 1)


def subset_mask(members) -> int:
    mask = 0
    for j in members:
        mask |= 1 << j
    return mask


def _check_rows_normalized(arr: np.ndarray, what: str):
    sums = arr.sum(axis=-1)
    if np.any(arr < -PROB_TOL):
        raise SeqDecError(f"{what}: negative probabilities")
    if np.max(np.abs(sums - 1.0)) > PROB_TOL:
        raise SeqDecError(f"{what}: rows must sum to 1 (max deviation "
                          f"{np.max(np.abs(sums - 1.0)):.2e})")


@dataclass(frozen=True)
class FiniteDecPOMDP:
    """Explicit-table process: n agents choosing subsets of m targets.

    Joint actions are indexed by stacking per-agent subset bitmasks in base
    2^m (agent 0 least significant); joint observations stack per-agent
    observation indices the same way.
    """

    n_agents: int
    n_targets: int
    n_states: int
    n_obs: tuple[int, ...]            # per-agent observation alphabet sizes
    transitions: np.ndarray            # (n_states, n_joint_actions, n_states)
    rewards: np.ndarray                # same shape as transitions
    observations: np.ndarray           # (n_states, n_joint_obs)
    initial: np.ndarray                # (n_states,)
    horizon: int

    def __post_init__(self):
        if self.n_agents < 1 or self.n_targets < 1 or self.n_states < 1:
            raise SeqDecError("need at least one agent, target, and state")
        if self.horizon < 1:
            raise SeqDecError(f"horizon must be >= 1, got {self.horizon}")
        if len(self.n_obs) != self.n_agents:
            raise SeqDecError("n_obs must list one alphabet size per agent")
        object.__setattr__(self, "n_obs", tuple(int(k) for k in self.n_obs))
        P = np.asarray(self.transitions, dtype=np.float64)
        R = np.asarray(self.rewards, dtype=np.float64)
        O = np.asarray(self.observations, dtype=np.float64)
        rho = np.asarray(self.initial, dtype=np.float64)
        shape = (self.n_states, self.n_joint_actions, self.n_states)
        if P.shape != shape:
            raise SeqDecError(f"transitions: expected shape {shape}, got {P.shape}")
        if R.shape != shape:
            raise SeqDecError(f"rewards: expected shape {shape}, got {R.shape}")
        if O.shape != (self.n_states, self.n_joint_obs):
            raise SeqDecError(
                f"observations: expected shape "
                f"{(self.n_states, self.n_joint_obs)}, got {O.shape}")
        if rho.shape != (self.n_states,):
            raise SeqDecError(f"initial: expected shape ({self.n_states},)")
        _check_rows_normalized(P, "transitions")
        _check_rows_normalized(O, "observations")
        _check_rows_normalized(rho[None, :], "initial distribution")
        for name, arr in (("transitions", P), ("rewards", R),
                          ("observations", O), ("initial", rho)):
            if not np.all(np.isfinite(arr)):
                raise SeqDecError(f"{name}: non-finite entries")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", R)
        object.__setattr__(self, "observations", O)
        object.__setattr__(self, "initial", rho)

    @property
    def n_subsets(self) -> int:
        return 1 << self.n_targets

    @property
    def n_joint_actions(self) -> int:
        return self.n_subsets**self.n_agents

    @property
    def n_joint_obs(self) -> int:
        return int(np.prod(self.n_obs))

    def joint_action_index(self, masks) -> int:
        idx = 0
        for k in reversed(range(self.n_agents)):
            idx = idx * self.n_subsets + masks[k]
        return idx

    def joint_action_masks(self, index: int) -> tuple[int, ...]:
        masks = []
        for _ in range(self.n_agents):
            masks.append(index % self.n_subsets)
            index //= self.n_subsets
        return tuple(masks)

    def joint_obs_components(self, index: int) -> tuple[int, ...]:
        comps = []
        for k in range(self.n_agents):
            comps.append(index % self.n_obs[k])
            index //= self.n_obs[k]
        return tuple(comps)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "n_agents": self.n_agents,
            "n_targets": self.n_targets,
            "n_states": self.n_states,
            "n_obs": list(self.n_obs),
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
            "observations": self.observations.tolist(),
            "initial": self.initial.tolist(),
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteDecPOMDP":
        try:
            return cls(
                n_agents=d["n_agents"], n_targets=d["n_targets"],
                n_states=d["n_states"], n_obs=tuple(d["n_obs"]),
                transitions=np.array(d["transitions"], dtype=np.float64),
                rewards=np.array(d["rewards"], dtype=np.float64),
                observations=np.array(d["observations"], dtype=np.float64),
                initial=np.array(d["initial"], dtype=np.float64),
                horizon=d["horizon"],
            )
        except KeyError as exc:
            raise SeqDecError(f"missing field {exc.args[0]!r}") from exc

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FiniteDecPOMDP":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class PolicyTable:
    """Reactive subset policy: per agent, per observation, a distribution
    over the 2^m target subsets."""

    n_targets: int
    probs: tuple[np.ndarray, ...]      # agent k: (n_obs_k, 2^m)

    def __post_init__(self):
        probs = tuple(np.asarray(p, dtype=np.float64) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        for k, p in enumerate(probs):
            if p.ndim != 2 or p.shape[1] != 1 << self.n_targets:
                raise SeqDecError(
                    f"agent {k}: expected (n_obs, {1 << self.n_targets}) "
                    f"probabilities, got {p.shape}")
            _check_rows_normalized(p, f"agent {k} policy")

    @property
    def n_agents(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class SeqPolicyTable:
    """Sequential policy: per agent, per observation and partial selection,
    a distribution over remaining targets plus stop (column m)."""

    n_targets: int
    probs: tuple[np.ndarray, ...]      # agent k: (n_obs_k, 2^m, m + 1)

    def __post_init__(self):
        m = self.n_targets
        probs = tuple(np.asarray(p, dtype=np.float64) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        for k, p in enumerate(probs):
            if p.ndim != 3 or p.shape[1] != 1 << m or p.shape[2] != m + 1:
                raise SeqDecError(
                    f"agent {k}: expected (n_obs, {1 << m}, {m + 1}) "
                    f"probabilities, got {p.shape}")
            _check_rows_normalized(p, f"agent {k} sequential policy")
            for mask in range(1 << m):
                selected = subset_members(mask)
                if selected and np.any(np.abs(p[:, mask, list(selected)]) > PROB_TOL):
                    raise SeqDecError(
                        f"agent {k}: nonzero mass on already-selected targets "
                        f"for selection {selected}")

    @property
    def n_agents(self) -> int:
        return len(self.probs)


class LiftedDecPOMDP:
    """Sequential-choice view of a base process.

    States are (s, selections) pairs where ``selections`` is the tuple of
    per-agent bitmasks accumulated so far; the bare base states are the
    ``selections=None`` entries (notationally distinct from all-empty).
    """

    def __init__(self, base: FiniteDecPOMDP):
        self.base = base
        self.states = [(s, None) for s in range(base.n_states)]
        masks = range(base.n_subsets)
        for s in range(base.n_states):
            for eps in itertools.product(masks, repeat=base.n_agents):
                self.states.append((s, eps))

    def action_set(self, state, agent: int) -> tuple[int, ...]:
        """Available micro-actions: unselected targets plus STOP."""
        _, eps = state
        mask = 0 if eps is None else eps[agent]
        free = tuple(j for j in range(self.base.n_targets) if not mask >> j & 1)
        return free + (STOP,)

    def transition(self, state, actions):
        """Outcomes [(next_state, probability, reward)] for a joint action."""
        s, eps = state
        if eps is None:
            eps = (0,) * self.base.n_agents
        if len(actions) != self.base.n_agents:
            raise SeqDecError(f"need {self.base.n_agents} actions")
        for k, a in enumerate(actions):
            if a != STOP and (not 0 <= a < self.base.n_targets or eps[k] >> a & 1):
                raise SeqDecError(f"agent {k}: action {a} not available")
        if all(a == STOP for a in actions):
            ja = self.base.joint_action_index(eps)
            reset = (0,) * self.base.n_agents
            return [((s2, reset), float(self.base.transitions[s, ja, s2]),
                     float(self.base.rewards[s, ja, s2]))
                    for s2 in range(self.base.n_states)
                    if self.base.transitions[s, ja, s2] > 0.0]
        new_eps = tuple(e if a == STOP else e | 1 << a
                        for e, a in zip(eps, actions))
        return [((s, new_eps), 1.0, 0.0)]


def lift(base: FiniteDecPOMDP) -> LiftedDecPOMDP:
    """Sequential-choice reformulation of a subset-action process."""
    return LiftedDecPOMDP(base)


def _check_exact_m(m: int, what: str):
    if m > MAX_TARGETS_EXACT:
        raise SeqDecError(
            f"{what} enumerates selection orders; m={m} exceeds the exact "
            f"limit of {MAX_TARGETS_EXACT}")


def transpose(pi_prime: SeqPolicyTable) -> PolicyTable:
    """Subset policy induced by running a sequential policy to completion.

    The probability of ending one round with selection eps is the sum over
    all |eps|! orders of picking its members one by one, times the stop
    probability at the full selection.
    """
    m = pi_prime.n_targets
    _check_exact_m(m, "transpose")
    out = []
    for p in pi_prime.probs:
        n_obs = p.shape[0]
        table = np.zeros((n_obs, 1 << m))
        for mask in range(1 << m):
            members = subset_members(mask)
            for omega in range(n_obs):
                total = 0.0
                for order in itertools.permutations(members):
                    cur = 0
                    prod = 1.0
                    for j in order:
                        prod *= p[omega, cur, j]
                        cur |= 1 << j
                    total += prod * p[omega, mask, m]
                table[omega, mask] = total
        out.append(table)
    return PolicyTable(n_targets=m, probs=tuple(out))


def invert(pi: PolicyTable) -> SeqPolicyTable:
    """A sequential preimage of a subset policy under transpose.

    For each partial selection eps, the reachability weight is
    N(eps) = sum over supersets A of pi(A) / C(|A|, |eps|); stopping gets
    pi(eps)/N(eps) and target j gets the superset sum with one more factor
    in the falling product.  Unreachable prefixes (N = 0) stop immediately.
    """
    m = pi.n_targets
    _check_exact_m(m, "invert")
    out = []
    for table in pi.probs:
        n_obs = table.shape[0]
        seq = np.zeros((n_obs, 1 << m, m + 1))
        for omega in range(n_obs):
            row = table[omega]
            for mask in range(1 << m):
                p = mask.bit_count()
                n_eps = 0.0
                for sup in range(1 << m):
                    if sup & mask == mask and row[sup] > 0.0:
                        n_eps += row[sup] / math.comb(sup.bit_count(), p)
                if n_eps <= 0.0:
                    seq[omega, mask, m] = 1.0
                    continue
                seq[omega, mask, m] = row[mask] / n_eps
                fact_p = math.factorial(p)
                for j in range(m):
                    if mask >> j & 1:
                        continue
                    need = mask | 1 << j
                    acc = 0.0
                    for sup in range(1 << m):
                        if sup & need == need and row[sup] > 0.0:
                            a = sup.bit_count()
                            acc += row[sup] * fact_p * \
                                math.factorial(a - p - 1) / math.factorial(a)
                    seq[omega, mask, j] = acc / n_eps
        out.append(seq)
    return SeqPolicyTable(n_targets=m, probs=tuple(out))


def _joint_action_distribution(M: FiniteDecPOMDP, pi: PolicyTable) -> np.ndarray:
    """(n_joint_obs, n_joint_actions) product-policy matrix."""
    A = np.ones((M.n_joint_obs, M.n_joint_actions))
    for o in range(M.n_joint_obs):
        comps = M.joint_obs_components(o)
        for ja in range(M.n_joint_actions):
            masks = M.joint_action_masks(ja)
            prod = 1.0
            for k in range(M.n_agents):
                prod *= pi.probs[k][comps[k], masks[k]]
            A[o, ja] = prod
    return A


def _check_value_work(M: FiniteDecPOMDP, what: str, micro: int = 1):
    work = (M.horizon * micro * M.n_states * M.n_states
            * M.n_joint_obs * M.n_joint_actions)
    if work > MAX_VALUE_WORK:
        raise SeqDecError(
            f"{what}: exact evaluation needs ~{work:.2e} operations "
            f"(states={M.n_states}, joint_obs={M.n_joint_obs}, "
            f"joint_actions={M.n_joint_actions}, horizon={M.horizon}); "
            f"limit is {MAX_VALUE_WORK:.0e}")


def value(M: FiniteDecPOMDP, pi: PolicyTable) -> float:
    """Exact expected total reward of a reactive subset policy."""
    if pi.n_agents != M.n_agents or pi.n_targets != M.n_targets:
        raise SeqDecError("policy shape does not match the process")
    for k in range(M.n_agents):
        if pi.probs[k].shape[0] != M.n_obs[k]:
            raise SeqDecError(f"agent {k}: policy has {pi.probs[k].shape[0]} "
                              f"observation rows, process has {M.n_obs[k]}")
    _check_value_work(M, "value")
    A = _joint_action_distribution(M, pi)
    PR = np.einsum("xas,xas->xa", M.transitions, M.rewards)
    belief = M.initial[:, None] * M.observations       # (s, o)
    total = 0.0
    for _ in range(M.horizon):
        mass_sa = belief @ A                            # (s, a)
        total += float(np.sum(mass_sa * PR))
        next_state = np.einsum("xa,xas->s", mass_sa, M.transitions)
        belief = next_state[:, None] * M.observations
    return total


def value_lifted(lifted: LiftedDecPOMDP, pi_prime: SeqPolicyTable) -> float:
    """Exact expected total reward of a sequential policy on the lifted
    process, running the base horizon's worth of completed rounds."""
    M = lifted.base
    if pi_prime.n_agents != M.n_agents or pi_prime.n_targets != M.n_targets:
        raise SeqDecError("policy shape does not match the process")
    for k in range(M.n_agents):
        if pi_prime.probs[k].shape[0] != M.n_obs[k]:
            raise SeqDecError(f"agent {k}: policy has "
                              f"{pi_prime.probs[k].shape[0]} observation rows, "
                              f"process has {M.n_obs[k]}")
    _check_value_work(M, "value_lifted", micro=M.n_targets + 1)
    m = M.n_targets
    obs_comp = [M.joint_obs_components(o) for o in range(M.n_joint_obs)]

    belief = {}
    for s in range(M.n_states):
        for o in range(M.n_joint_obs):
            p = M.initial[s] * M.observations[s, o]
            if p > 0.0:
                belief[(s, o)] = belief.get((s, o), 0.0) + p

    total = 0.0
    zero = (0,) * M.n_agents
    not_done = (False,) * M.n_agents
    for _ in range(M.horizon):
        micro = {(s, o, zero, not_done): p for (s, o), p in belief.items()}
        nxt = defaultdict(float)
        for _ in range(m + 1):
            stage = defaultdict(float)
            for (s, o, eps, done), p in micro.items():
                comps = obs_comp[o]
                choices = []
                for k in range(M.n_agents):
                    if done[k]:
                        choices.append(((STOP, 1.0),))
                    else:
                        row = pi_prime.probs[k][comps[k], eps[k]]
                        opts = [(j, row[j]) for j in range(m)
                                if row[j] > 0.0 and not eps[k] >> j & 1]
                        if row[m] > 0.0:
                            opts.append((STOP, row[m]))
                        choices.append(tuple(opts))
                for combo in itertools.product(*choices):
                    q = p
                    for _, pr in combo:
                        q *= pr
                    if q == 0.0:
                        continue
                    acts = tuple(a for a, _ in combo)
                    if all(a == STOP for a in acts):
                        ja = M.joint_action_index(eps)
                        for s2 in range(M.n_states):
                            ps = M.transitions[s, ja, s2]
                            if ps == 0.0:
                                continue
                            total += q * ps * M.rewards[s, ja, s2]
                            for o2 in range(M.n_joint_obs):
                                po = M.observations[s2, o2]
                                if po > 0.0:
                                    nxt[(s2, o2)] += q * ps * po
                    else:
                        new_eps = tuple(e if a == STOP else e | 1 << a
                                        for e, a in zip(eps, acts))
                        new_done = tuple(d or a == STOP
                                         for d, a in zip(done, acts))
                        stage[(s, o, new_eps, new_done)] += q
            micro = stage
            if not micro:
                break
        leftover = sum(micro.values())
        if leftover > 1e-9:
            raise SeqDecError(
                f"round did not complete within {m + 1} micro-steps "
                f"(residual mass {leftover:.3e})")
        belief = dict(nxt)
    return total


def random_instance(rng, n_agents=2, n_targets=2, n_states=3, n_obs=2,
                    horizon=3) -> FiniteDecPOMDP:
    """Random explicit-table process with Dirichlet rows; for property suites."""
    n_ja = (1 << n_targets)**n_agents
    n_jo = n_obs**n_agents
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_ja))
    R = rng.normal(size=(n_states, n_ja, n_states))
    O = rng.dirichlet(np.ones(n_jo), size=n_states)
    rho = rng.dirichlet(np.ones(n_states))
    return FiniteDecPOMDP(
        n_agents=n_agents, n_targets=n_targets, n_states=n_states,
        n_obs=(n_obs,) * n_agents, transitions=P, rewards=R,
        observations=O, initial=rho, horizon=horizon)


def random_policy(M: FiniteDecPOMDP, rng) -> PolicyTable:
    probs = tuple(rng.dirichlet(np.ones(M.n_subsets), size=M.n_obs[k])
                  for k in range(M.n_agents))
    return PolicyTable(n_targets=M.n_targets, probs=probs)


def random_seq_policy(M: FiniteDecPOMDP, rng) -> SeqPolicyTable:
    m = M.n_targets
    probs = []
    for k in range(M.n_agents):
        p = np.zeros((M.n_obs[k], 1 << m, m + 1))
        for omega in range(M.n_obs[k]):
            for mask in range(1 << m):
                free = [j for j in range(m) if not mask >> j & 1] + [m]
                p[omega, mask, free] = rng.dirichlet(np.ones(len(free)))
        probs.append(p)
    return SeqPolicyTable(n_targets=m, probs=tuple(probs))
