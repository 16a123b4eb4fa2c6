"""Optimal block matching with contiguous-merge repair.

Reference and candidate text blocks are paired by minimum-cost assignment
on cost = -text_similarity; pairs below a similarity threshold are
discarded.  Because renderers fragment text differently (one block on one
side may appear as several on the other), a hill-climbing search then
tries merging short runs of neighboring blocks on either side, keeping a
merge only when the total matched similarity strictly improves.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .blocks import TextBlock
from .render import Rect

__all__ = [
    "CostMatrix",
    "DEFAULT_MERGE_BUDGET",
    "DEFAULT_THRESHOLD",
    "MAX_MERGE_RUN",
    "Matching",
    "MatchResult",
    "MergePlan",
    "build_cost_matrix",
    "match_blocks",
    "merge_blocks",
    "merge_search",
    "solve_assignment",
    "text_similarity",
]

DEFAULT_THRESHOLD = 0.5
DEFAULT_MERGE_BUDGET = 50
MAX_MERGE_RUN = 5


def text_similarity(a: str, b: str) -> float:
    """Character-multiset Dice coefficient in [0, 1].

    Twice the number of characters shared (counting multiplicity) divided
    by the total number of characters.  Two empty strings score 0.0: an
    empty block carries no evidence of being the same text.
    """
    if not a or not b:
        return 0.0
    counts_a = Counter(a)
    counts_b = Counter(b)
    overlap = sum(min(counts_a[ch], counts_b[ch]) for ch in counts_a)
    return 2.0 * overlap / (len(a) + len(b))


@dataclass(frozen=True)
class CostMatrix:
    """Assignment costs: rows are reference blocks, columns candidates."""

    costs: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.costs.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class Matching:
    """A minimum-cost assignment: (row, col) pairs sorted by row."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float


@dataclass(frozen=True)
class MergePlan:
    """A partition of block indices into runs of reading-order neighbors.

    Identity plans have every block in its own group.  Groups are tuples
    of consecutive original indices, in order.
    """

    groups: tuple[tuple[int, ...], ...]

    @classmethod
    def identity(cls, count: int) -> "MergePlan":
        return cls(tuple((i,) for i in range(count)))

    @property
    def is_identity(self) -> bool:
        return all(len(g) == 1 for g in self.groups)


def build_cost_matrix(ref: list[TextBlock], cand: list[TextBlock]) -> CostMatrix:
    costs = np.zeros((len(ref), len(cand)), dtype=np.float64)
    for i, rb in enumerate(ref):
        for j, cb in enumerate(cand):
            costs[i, j] = -text_similarity(rb.text, cb.text)
    return CostMatrix(costs)


def solve_assignment(cost: CostMatrix | np.ndarray) -> Matching:
    """Minimum-total-cost assignment with a deterministic tie-break.

    After the optimal solve, cost-neutral local moves (descending-column
    swaps between assigned pairs, substitutions toward unused columns with
    equal cost and smaller index) run to a fixed point, so among equal-cost
    optima the returned pairing is a canonical one rather than whatever the
    solver's internal order produced.
    """
    costs = cost.costs if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    if costs.size == 0:
        return Matching((), 0.0)
    rows, cols = linear_sum_assignment(costs)
    assigned = dict(zip(rows.tolist(), cols.tolist()))

    n_cols = costs.shape[1]
    changed = True
    while changed:
        changed = False
        items = sorted(assigned.items())
        used = set(assigned.values())
        for idx_a in range(len(items)):
            i, ci = items[idx_a]
            for cj in range(ci):
                if cj not in used and costs[i, cj] == costs[i, ci]:
                    assigned[i] = cj
                    changed = True
                    break
            if changed:
                break
            for idx_b in range(idx_a + 1, len(items)):
                j, cjj = items[idx_b]
                if cjj < ci and costs[i, cjj] + costs[j, ci] == costs[i, ci] + costs[j, cjj]:
                    assigned[i], assigned[j] = cjj, ci
                    changed = True
                    break
            if changed:
                break

    pairs = tuple(sorted(assigned.items()))
    total = float(sum(costs[i, j] for i, j in pairs))
    return Matching(pairs, total)


# ── merging ──────────────────────────────────────────────────────────────


def merge_blocks(members: list[TextBlock]) -> TextBlock:
    """Fuse reading-order neighbors: joined text, union bbox, summed area.

    The merged color is the member color holding the largest share of the
    combined area; ties go to the earliest member.
    """
    if not members:
        raise ValueError("cannot merge zero blocks")
    if len(members) == 1:
        return members[0]
    text = " ".join(b.text for b in members)
    x0 = min(b.bbox.x for b in members)
    y0 = min(b.bbox.y for b in members)
    x1 = max(b.bbox.right for b in members)
    y1 = max(b.bbox.bottom for b in members)
    area = float(sum(b.area for b in members))
    mass: dict[tuple[int, int, int], float] = {}
    first_seen: dict[tuple[int, int, int], int] = {}
    for idx, b in enumerate(members):
        mass[b.color] = mass.get(b.color, 0.0) + b.area
        first_seen.setdefault(b.color, idx)
    color = min(mass, key=lambda c: (-mass[c], first_seen[c]))
    pixels = sum(b.pixel_count for b in members)
    return TextBlock(
        text=text,
        bbox=Rect(x0, y0, x1 - x0, y1 - y0),
        area=area,
        color=color,
        pixel_count=pixels,
    )


def apply_merge_plan(blocks: list[TextBlock], plan: MergePlan) -> list[TextBlock]:
    return [merge_blocks([blocks[i] for i in group]) for group in plan.groups]


def _kept_pairs(
    ref: list[TextBlock], cand: list[TextBlock], threshold: float
) -> tuple[list[tuple[int, int, float]], float]:
    matching = solve_assignment(build_cost_matrix(ref, cand))
    kept: list[tuple[int, int, float]] = []
    objective = 0.0
    for i, j in matching.pairs:
        sim = text_similarity(ref[i].text, cand[j].text)
        if sim >= threshold:
            kept.append((i, j, sim))
            objective += sim
    return kept, objective


@dataclass
class MatchResult:
    """Final pairing after merge repair, plus how each side was merged."""

    pairs: list[tuple[TextBlock, TextBlock, float]]
    merged_ref: list[TextBlock]
    merged_cand: list[TextBlock]
    plan_ref: MergePlan
    plan_cand: MergePlan
    objective: float
    solves_used: int = 0


def _regroup(plan: MergePlan, start: int, length: int) -> MergePlan:
    groups = list(plan.groups)
    fused = tuple(i for g in groups[start : start + length] for i in g)
    return MergePlan(tuple(groups[:start] + [fused] + groups[start + length :]))


def merge_search(
    ref: list[TextBlock],
    cand: list[TextBlock],
    *,
    threshold: float = DEFAULT_THRESHOLD,
    budget: int = DEFAULT_MERGE_BUDGET,
    max_run: int = MAX_MERGE_RUN,
) -> MatchResult:
    """Hill-climb over contiguous merges on either side.

    First-improvement search in a fixed scan order (run length 2..max_run,
    then side, then start position); a merge is kept only if the total
    kept-pair similarity strictly increases, so the objective is monotone
    and the search terminates.  ``budget`` caps how many assignment
    re-solves the exploration may spend; 0 disables merging entirely.
    """
    plan_r = MergePlan.identity(len(ref))
    plan_c = MergePlan.identity(len(cand))
    cur_r = list(ref)
    cur_c = list(cand)
    kept, objective = _kept_pairs(cur_r, cur_c, threshold)
    solves = 0

    improved = True
    while improved and solves < budget:
        improved = False
        for run in range(2, max_run + 1):
            for side in ("ref", "cand"):
                blocks = cur_r if side == "ref" else cur_c
                if len(blocks) < run:
                    continue
                for start in range(len(blocks) - run + 1):
                    if solves >= budget:
                        break
                    trial = blocks[:start] + [merge_blocks(blocks[start : start + run])] + blocks[start + run :]
                    if side == "ref":
                        trial_kept, trial_obj = _kept_pairs(trial, cur_c, threshold)
                    else:
                        trial_kept, trial_obj = _kept_pairs(cur_r, trial, threshold)
                    solves += 1
                    if trial_obj > objective:
                        if side == "ref":
                            cur_r = trial
                            plan_r = _regroup(plan_r, start, run)
                        else:
                            cur_c = trial
                            plan_c = _regroup(plan_c, start, run)
                        kept, objective = trial_kept, trial_obj
                        improved = True
                        break
                if improved or solves >= budget:
                    break
            if improved or solves >= budget:
                break

    pairs = [(cur_r[i], cur_c[j], sim) for i, j, sim in kept]
    return MatchResult(
        pairs=pairs,
        merged_ref=cur_r,
        merged_cand=cur_c,
        plan_ref=plan_r,
        plan_cand=plan_c,
        objective=objective,
        solves_used=solves,
    )


def match_blocks(
    ref: list[TextBlock],
    cand: list[TextBlock],
    *,
    threshold: float = DEFAULT_THRESHOLD,
    merge_budget: int = DEFAULT_MERGE_BUDGET,
) -> MatchResult:
    """Pair reference and candidate blocks, repairing fragmentation.

    Convenience wrapper over merge_search with the standard parameters.
    """
    return merge_search(ref, cand, threshold=threshold, budget=merge_budget)
