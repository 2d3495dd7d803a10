"""Greedy skill-cover task assignment under per-task budgets, and remuneration policies.

Each task (in arrival order) repeatedly takes the highest-utility volunteer that
still covers at least one missing skill and whose pay fits the remaining
budget. A task that cannot be fully covered releases its picks and stays open.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import EPS, AllocationMap, SkillCatalog, Task, Volunteer

POLICY_KINDS = ("cost_coverage", "fixed", "training", "increasing")


class AssignmentError(ValueError):
    pass


@dataclass(frozen=True)
class UtilityWeights:
    w_skill: float = 1 / 3
    w_willingness: float = 1 / 3
    w_cost: float = 1 / 3

    def __post_init__(self) -> None:
        ws = (self.w_skill, self.w_willingness, self.w_cost)
        if any(w < 0 for w in ws):
            raise AssignmentError("utility weights must be non-negative")
        if abs(sum(ws) - 1.0) > 1e-9:
            raise AssignmentError(f"utility weights must sum to 1, got {sum(ws)}")


@dataclass(frozen=True)
class RemunerationPolicy:
    kind: str = "cost_coverage"
    base: float = 0.0
    slope: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise AssignmentError(f"unknown policy kind {self.kind!r}")
        if self.base < 0 or self.slope < 0:
            raise AssignmentError("policy base and slope must be non-negative")

    @property
    def pays_expense(self) -> bool:
        return self.kind in ("cost_coverage", "fixed")

    def flat_amount(self, round_: int) -> float:
        if self.kind == "training":
            return max(0.0, self.base - self.slope * (round_ - 1))
        if self.kind == "increasing":
            return self.base + self.slope * (round_ - 1)
        raise AssignmentError(f"{self.kind} pays per-volunteer expense, not a flat amount")


def remuneration(policy: RemunerationPolicy, v: Volunteer, round_: int) -> float:
    if round_ < 1:
        raise AssignmentError("round must be >= 1")
    if policy.pays_expense:
        return float(v.expense)
    return policy.flat_amount(round_)


def utility_score(cover, required, willingness, expense, budget, weights: UtilityWeights):
    """Marginal skill coverage plus willingness minus budget-normalised cost."""
    cover = np.asarray(cover, dtype=float)
    expense = np.asarray(expense, dtype=float)
    if budget > 0:
        cost = expense / budget
    else:
        cost = np.where(expense > 0, np.inf, 0.0)
    out = (
        weights.w_skill * cover / required
        + weights.w_willingness * np.asarray(willingness, dtype=float)
        - weights.w_cost * cost
    )
    return float(out) if out.ndim == 0 else out


def candidate_utility(
    v: Volunteer, t: Task, covered: frozenset[str] | set[str], weights: UtilityWeights
) -> float:
    gain = len(v.skills & (t.required_skills - covered))
    if gain == 0:
        raise AssignmentError(f"volunteer {v.id} adds no uncovered skill to task {t.id}")
    return utility_score(gain, len(t.required_skills), v.willingness, v.expense, t.budget, weights)


class SkillEncoder:
    """Packs skill sets into rows of uint64 words for fast intersection counts."""

    def __init__(self, catalog: SkillCatalog):
        self.catalog = catalog
        self.words = (len(catalog) + 63) // 64
        self._bit = {s: 1 << i for i, s in enumerate(catalog.skills)}

    def int_mask(self, skills) -> int:
        bit = self._bit
        try:
            return sum(bit[s] for s in skills)
        except KeyError as exc:
            raise AssignmentError(f"skill {exc.args[0]!r} not in catalog") from None

    def rows(self, int_masks) -> np.ndarray:
        """Split Python-int masks into an ``(n, words)`` uint64 array."""
        ints = list(int_masks)
        out = np.zeros((len(ints), self.words), dtype=np.uint64)
        low = (1 << 64) - 1
        for w in range(self.words):
            out[:, w] = np.array([(m >> (64 * w)) & low for m in ints], dtype=np.uint64)
        return out

    def encode(self, skills) -> np.ndarray:
        return self.rows([self.int_mask(skills)])[0]

    def encode_many(self, skill_sets) -> np.ndarray:
        return self.rows(self.int_mask(s) for s in skill_sets)


def _popcount_rows(masks: np.ndarray, need: np.ndarray) -> np.ndarray:
    return np.bitwise_count(masks & need).sum(axis=1, dtype=np.int64)


def assign_round(
    tasks: Sequence[Task],
    volunteers: Sequence[Volunteer],
    weights: UtilityWeights,
    policy: RemunerationPolicy,
    round_: int,
    catalog: SkillCatalog | None = None,
    *,
    masks: np.ndarray | None = None,
) -> AllocationMap:
    """Build this round's allocation map.

    ``masks`` may carry pre-encoded skill rows aligned with ``volunteers``; the
    round loop caches them so each volunteer is encoded once.
    """
    if catalog is None:
        universe = set().union(*(t.required_skills for t in tasks), *(v.skills for v in volunteers))
        catalog = SkillCatalog(tuple(sorted(universe)) or ("_",))
    encoder = SkillEncoder(catalog)

    order = sorted(range(len(volunteers)), key=lambda i: volunteers[i].id)
    vols = [volunteers[i] for i in order]
    if masks is None:
        pool_masks = encoder.encode_many(v.skills for v in vols)
    else:
        pool_masks = np.asarray(masks, dtype=np.uint64)[order] if order else masks[:0]
    willingness = np.array([v.willingness for v in vols], dtype=float)
    expense = np.array([v.expense for v in vols], dtype=float)
    if policy.pays_expense:
        pay = expense
    else:
        pay = np.full(len(vols), policy.flat_amount(round_))
    free = np.ones(len(vols), dtype=bool)

    entries: dict[str, tuple[tuple[str, float], ...]] = {}
    for task in sorted(tasks, key=lambda t: (t.arrival_time, t.id)):
        need = encoder.encode(task.required_skills)
        required = len(task.required_skills)
        if required == 0 or not len(vols):
            continue
        cand = np.flatnonzero(free & (_popcount_rows(pool_masks, need) > 0))
        if cand.size == 0:
            continue
        c_masks = pool_masks[cand]
        c_pay = pay[cand]
        # Only the coverage term changes between picks.
        static = utility_score(0.0, required, willingness[cand], expense[cand], task.budget, weights)
        open_ = np.ones(cand.size, dtype=bool)
        residual = float(task.budget)
        picks: list[int] = []
        while need.any():
            gain = _popcount_rows(c_masks, need)
            feasible = open_ & (gain > 0) & (c_pay <= residual + EPS)
            if not feasible.any():
                break
            util = np.where(feasible, static + weights.w_skill * gain / required, -np.inf)
            j = int(np.argmax(util))
            if not np.isfinite(util[j]):
                break
            picks.append(j)
            open_[j] = False
            need = need & ~c_masks[j]
            residual -= float(c_pay[j])
        if need.any():
            continue
        chosen = cand[picks]
        free[chosen] = False
        entries[task.id] = tuple((vols[i].id, float(pay[i])) for i in chosen)
    return AllocationMap(round=round_, entries=entries)


def budget_ok(alloc: AllocationMap, tasks: dict[str, Task]) -> bool:
    return not alloc.budget_violations(tasks)


def covers(alloc: AllocationMap, tasks: dict[str, Task], vols: dict[str, Volunteer]) -> bool:
    for task_id, picks in alloc.entries.items():
        have = set().union(*(vols[v].skills for v, _ in picks)) if picks else set()
        if not tasks[task_id].required_skills <= have:
            return False
    return True


def total_paid(alloc: AllocationMap) -> float:
    return math.fsum(alloc.payments().values())
