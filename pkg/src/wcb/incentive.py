"""Participation dividends, cumulative income, satisfaction and the contingency fund."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .model import EPS, ContingencyLedger, VolunteerLedger


class IncentiveError(ValueError):
    pass


@dataclass(frozen=True)
class DividendContext:
    """Frozen snapshot the dividend formula is evaluated against.

    ``cohort_potentials`` covers every active volunteer (the max is taken over
    all of them). ``unassigned`` is the set the normalising sum runs over;
    ``recipients`` is the subset actually paid and defaults to ``unassigned``.
    """

    contingency_balance: float
    gamma: float
    cohort_potentials: Mapping[str, float]
    unassigned: frozenset[str]
    recipients: frozenset[str] | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "unassigned", frozenset(self.unassigned))
        rec = self.unassigned if self.recipients is None else frozenset(self.recipients)
        object.__setattr__(self, "recipients", rec)
        if self.contingency_balance < 0:
            raise IncentiveError("contingency balance must be non-negative")
        if self.gamma < 0:
            raise IncentiveError("gamma must be non-negative")
        missing = (self.unassigned | rec) - self.cohort_potentials.keys()
        if missing:
            raise IncentiveError(f"no potential recorded for {sorted(missing)[:5]}")
        if not rec <= self.unassigned:
            raise IncentiveError("recipients must be a subset of the unassigned set")

    @property
    def cohort_max(self) -> float:
        if "max" not in self._cache:
            self._cache["max"] = max(self.cohort_potentials.values(), default=0.0)
        return self._cache["max"]

    @property
    def normaliser(self) -> float:
        """Sum of max-normalised potentials over the unassigned set."""
        if "sum" not in self._cache:
            m = self.cohort_max
            self._cache["sum"] = (
                math.fsum(self.cohort_potentials[v] / m for v in self.unassigned) if m > 0 else 0.0
            )
        return self._cache["sum"]

    def share(self, volunteer_id: str) -> float:
        m = self.cohort_max
        return self.cohort_potentials[volunteer_id] / m if m > 0 else 0.0


def dividend(volunteer_id: str, ctx: DividendContext) -> float:
    if volunteer_id not in ctx.recipients:
        raise IncentiveError(f"{volunteer_id} is not a dividend recipient")
    denom = ctx.normaliser
    if ctx.cohort_max <= 0 or denom <= 0:
        return 0.0
    return ctx.gamma * ctx.share(volunteer_id) * (ctx.contingency_balance / denom)


def dividends(ctx: DividendContext) -> dict[str, float]:
    return {vid: dividend(vid, ctx) for vid in sorted(ctx.recipients)}


def total_dividend(ctx: DividendContext) -> float:
    return math.fsum(dividends(ctx).values())


def update_cumulative_income(
    ledger: VolunteerLedger, remuneration_paid: float, dividend_paid: float
) -> VolunteerLedger:
    """Add this round's remuneration and dividend to ``ledger`` (in place) and return it."""
    if remuneration_paid < 0 or dividend_paid < 0:
        raise IncentiveError("payments must be non-negative")
    ledger.cumulative_income += remuneration_paid + dividend_paid
    return ledger


def satisfaction_score(previous_potential, cohort_max, cumulative_income, expense, round_, omega):
    """Weighted blend of relative potential and income coverage; works elementwise.

    The income term is clamped at 1 so the score stays inside [0, 1].
    """
    prev = np.asarray(previous_potential, dtype=float)
    cmax = np.asarray(cohort_max, dtype=float)
    ci = np.asarray(cumulative_income, dtype=float)
    cost = np.asarray(expense, dtype=float)
    r = np.asarray(round_, dtype=float)
    w = np.asarray(omega, dtype=float)
    if np.any(r < 2):
        raise IncentiveError("satisfaction is undefined before round 2")
    if np.any(cost <= 0):
        raise IncentiveError("expense must be positive")
    if np.any(cmax <= 0):
        raise IncentiveError("cohort max potential must be positive")
    if np.any(w < 0) or np.any(w > 1):
        raise IncentiveError("omega must be in [0,1]")
    relative = np.clip(prev / cmax, 0.0, 1.0)
    income = np.minimum(1.0, ci / (cost * (r - 1.0)))
    score = (1.0 - w) * relative + w * income
    score = np.clip(score, 0.0, 1.0)
    return float(score) if score.ndim == 0 else score


@dataclass(frozen=True)
class SatisfactionInputs:
    previous_potential: float
    cohort_max_potential: float
    cumulative_income: float
    expense: float
    round: int
    omega: float = 0.5


def satisfaction(inputs: SatisfactionInputs) -> float:
    return satisfaction_score(
        inputs.previous_potential,
        inputs.cohort_max_potential,
        inputs.cumulative_income,
        inputs.expense,
        inputs.round,
        inputs.omega,
    )


def replenish_contingency(
    ledger: ContingencyLedger, completed: Iterable[tuple[float, float]]
) -> ContingencyLedger:
    """Credit the leftover ``budget - paid`` of each completed task to the fund."""
    leftovers = []
    for budget, paid in completed:
        if paid > budget + EPS:
            raise IncentiveError(f"task overspent: paid {paid} > budget {budget}")
        leftovers.append(max(budget - paid, 0.0))
    ledger.deposit(math.fsum(leftovers))
    return ledger
