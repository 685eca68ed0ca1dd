"""Allocation policies: the decision interface plus the greedy baseline.

A policy looks at one radar's observation matrix and picks the subset of
targets the radar will measure this step, subject to the radar's tracking
budget.  Policies are deliberately decentralized: they see only what the
observation matrix carries.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from . import features


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class Allocation:
    """One radar's chosen target subset for a single step.

    ``targets`` keeps the ids exactly as chosen (ordered, possibly with
    duplicates if a buggy policy produced them); validation rejects
    duplicates rather than silently deduplicating.
    """

    radar_id: int
    targets: tuple[int, ...]
    total_cost: float

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))

    @property
    def target_set(self) -> frozenset[int]:
        return frozenset(self.targets)

    def __contains__(self, target_id: int) -> bool:
        return target_id in self.target_set

    def __len__(self) -> int:
        return len(self.targets)


def empty_allocation(radar_id: int) -> Allocation:
    return Allocation(radar_id=radar_id, targets=(), total_cost=0.0)


def make_allocation(radar_id: int, targets, costs: np.ndarray) -> Allocation:
    """Build an allocation, computing its total cost from the cost vector."""
    targets = tuple(int(t) for t in targets)
    total = float(sum(costs[t] for t in targets))
    return Allocation(radar_id=radar_id, targets=targets, total_cost=total)


def validate_allocation(alloc: Allocation, budget: float, costs: np.ndarray) -> bool:
    """True iff the allocation is feasible for the given budget and costs.

    Checks: all target ids in range, no duplicates, stored total cost
    consistent with the cost vector, and total cost within budget.
    """
    m = len(costs)
    if any(t < 0 or t >= m for t in alloc.targets):
        return False
    if len(alloc.target_set) != len(alloc.targets):
        return False
    total = float(sum(costs[t] for t in alloc.targets))
    if abs(total - alloc.total_cost) > 1e-9 * max(1.0, abs(total)):
        return False
    return total <= budget + 1e-9


class AllocationPolicy(ABC):
    """Decision interface used by the world's step loop."""

    name = "policy"

    @abstractmethod
    def decide(self, obs, radar_id: int, budget: float,
               costs: np.ndarray) -> Allocation:
        """Pick this radar's allocation from its observation matrix.

        ``obs`` is an ObservationMatrix (rows (m, 23), fov_mask (m,)).
        Implementations must return a feasible allocation.
        """

    def reset(self, seed=None):
        """Reset per-episode state; default policies are stateless."""


def budgeted_fill(order, costs: np.ndarray, budget: float,
                  allowed: np.ndarray) -> list[int]:
    """Greedy skip-and-continue fill: walk ``order``, take every target that
    still fits in the remaining budget, skip ones that do not, keep going."""
    chosen = []
    remaining = float(budget)
    for t in order:
        t = int(t)
        if not allowed[t]:
            continue
        c = float(costs[t])
        if c <= remaining + 1e-12:
            chosen.append(t)
            remaining -= c
    return chosen


class GreedyBaseline(AllocationPolicy):
    """Nearest-first baseline: rank in-FOV targets by estimated range
    (ties by target id) and fill the budget with skip-and-continue."""

    name = "greedy"

    def decide(self, obs, radar_id: int, budget: float,
               costs: np.ndarray) -> Allocation:
        rows = obs.rows
        m = rows.shape[0]
        rng_col = rows[:, features.RANGE]
        order = np.lexsort((np.arange(m), rng_col))
        chosen = budgeted_fill(order, costs, budget, obs.fov_mask)
        return make_allocation(radar_id, chosen, costs)


@dataclass
class FixedPolicy(AllocationPolicy):
    """Always requests the same target ids (intersected with the FOV).
    Useful for tests and for exercising invalid-allocation handling."""

    targets: tuple[int, ...]
    respect_fov: bool = True
    name: str = field(default="fixed")

    def decide(self, obs, radar_id: int, budget: float,
               costs: np.ndarray) -> Allocation:
        wanted = [t for t in self.targets
                  if not self.respect_fov or obs.fov_mask[t]]
        chosen = budgeted_fill(wanted, costs, budget,
                               np.ones(obs.rows.shape[0], dtype=bool))
        return make_allocation(radar_id, chosen, costs)
