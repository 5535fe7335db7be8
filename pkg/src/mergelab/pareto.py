"""Pareto-optimal and near-frontier selection in the two-objective score plane.

Both objectives (instruction score, medical average) are maximized.
"Near" is additive epsilon-dominance: a point is near the frontier when
no other point beats it by at least epsilon in both objectives.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import groupby
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .sweep import EvalPoint

__all__ = [
    "DEFAULT_NEAR_EPSILON",
    "ParetoResult",
    "dominates",
    "pareto_frontier",
    "near_frontier",
    "pareto_result",
]

# half a percentage point on [0, 1] scores
DEFAULT_NEAR_EPSILON = 0.005


@dataclass(frozen=True)
class ParetoResult:
    """Frontier and epsilon-near-frontier membership over a set of points."""

    frontier: list[int]
    near_frontier: list[int]
    epsilon: float

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if not set(self.frontier) <= set(self.near_frontier):
            raise ValueError("frontier must be a subset of near_frontier")


def dominates(p: "EvalPoint", q: "EvalPoint") -> bool:
    """True iff p is at least as good as q in both objectives and better in one."""
    return (
        p.instruction_score >= q.instruction_score
        and p.medical_avg >= q.medical_avg
        and (p.instruction_score > q.instruction_score or p.medical_avg > q.medical_avg)
    )


def _sorted_indices(points: Sequence["EvalPoint"], indices: list[int]) -> list[int]:
    return sorted(indices, key=lambda i: (points[i].instruction_score, points[i].medical_avg, i))


def pareto_frontier(points: Sequence["EvalPoint"]) -> list[int]:
    """Indices of all points not dominated by any other point.

    Duplicates of a non-dominated point are all included. Output is sorted
    by instruction score ascending, ties by medical average, ties by index.
    """
    order = sorted(range(len(points)), key=lambda i: (-points[i].instruction_score, -points[i].medical_avg))
    frontier: list[int] = []
    best_med_above = -np.inf  # max medical_avg among strictly higher instruction scores
    for _, group in groupby(order, key=lambda i: points[i].instruction_score):
        members = list(group)
        group_max = points[members[0]].medical_avg
        if group_max > best_med_above:
            frontier.extend(i for i in members if points[i].medical_avg == group_max)
            best_med_above = group_max
    return _sorted_indices(points, frontier)


def near_frontier(points: Sequence["EvalPoint"], epsilon: float) -> list[int]:
    """Indices of points not epsilon-dominated by any other point.

    Index i is kept unless some point beats it by at least ``epsilon`` in
    both objectives. With epsilon 0 this keeps exactly the weakly
    non-dominated points and is a superset of :func:`pareto_frontier`.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if not points:
        return []
    ins = np.array([p.instruction_score for p in points], dtype=np.float64)
    med = np.array([p.medical_avg for p in points], dtype=np.float64)
    # beats[i, j]: point j exceeds point i by >= epsilon in both objectives
    beats = (ins[None, :] >= ins[:, None] + epsilon) & (med[None, :] >= med[:, None] + epsilon)
    if epsilon == 0.0:
        # self-comparison (and exact duplicates) must not count as dominance
        beats &= (ins[None, :] != ins[:, None]) | (med[None, :] != med[:, None])
    kept = np.flatnonzero(~beats.any(axis=1)).tolist()
    return _sorted_indices(points, kept)


def pareto_result(points: Sequence["EvalPoint"], epsilon: float = DEFAULT_NEAR_EPSILON) -> ParetoResult:
    """Compute frontier and epsilon-near-frontier membership in one pass."""
    return ParetoResult(
        frontier=pareto_frontier(points),
        near_frontier=near_frontier(points, epsilon),
        epsilon=epsilon,
    )
