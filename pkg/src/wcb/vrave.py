"""Per-round retention pass over unassigned volunteers: pay dividends, score, drop or keep."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .incentive import DividendContext, dividend, satisfaction_score, update_cumulative_income
from .model import AllocationMap, ContingencyLedger, Volunteer, VolunteerLedger

RETAINED = "retained"
DROPPED = "dropped"


class RetentionError(ValueError):
    pass


@dataclass(frozen=True)
class Eligibility:
    """Who among the unassigned receives a dividend.

    ``min_streak == 1`` pays every unassigned volunteer; ``k`` pays only those
    unassigned for ``k`` or more consecutive rounds, counting the current one.
    """

    min_streak: int = 1

    @classmethod
    def parse(cls, text: str) -> Eligibility:
        if text == "all_unassigned":
            return cls(1)
        if text.startswith("min_consecutive:"):
            k = int(text.split(":", 1)[1])
            if k < 1:
                raise RetentionError("min_consecutive needs k >= 1")
            return cls(k)
        raise RetentionError(f"unknown dividend eligibility {text!r}")

    def __str__(self) -> str:
        return "all_unassigned" if self.min_streak == 1 else f"min_consecutive:{self.min_streak}"

    def admits(self, ledger: VolunteerLedger) -> bool:
        return ledger.consecutive_unassigned + 1 >= self.min_streak


@dataclass(frozen=True)
class VolunteerOutcome:
    dividend: float
    satisfaction: float | None
    decision: str


@dataclass
class RetentionOutcome:
    dropped: set[str] = field(default_factory=set)
    retained: set[str] = field(default_factory=set)
    total_dividend: float = 0.0
    per_volunteer: dict[str, VolunteerOutcome] = field(default_factory=dict)
    events: list[dict] = field(default_factory=list)


def unassigned_set(alloc: AllocationMap, active: Iterable[str]) -> set[str]:
    active = set(active)
    assigned = alloc.assigned_ids()
    dangling = assigned - active
    if dangling:
        raise RetentionError(f"allocation references inactive volunteers {sorted(dangling)[:5]}")
    return active - assigned


def run_vrave(
    contingency: ContingencyLedger,
    round_: int,
    alloc: AllocationMap,
    volunteers: Mapping[str, Volunteer],
    ledgers: Mapping[str, VolunteerLedger],
    threshold: float,
    *,
    omega: float = 0.5,
    eligibility: Eligibility | str = Eligibility(),
    drop: bool = True,
    pay_dividends: bool = True,
) -> RetentionOutcome:
    """Pay dividends to unassigned volunteers, then drop those whose satisfaction
    falls strictly below ``threshold``.

    Ledgers of unassigned volunteers get their dividend added to cumulative
    income. Satisfaction uses each volunteer's own tenure as the round index;
    volunteers in their first round are kept without being scored. With
    ``drop=False`` scores are computed but everyone is kept; with
    ``pay_dividends=False`` the threshold rule runs without any payout. The
    contingency balance is read, never debited here.
    """
    if round_ < 1:
        raise RetentionError("round must be >= 1")
    if not 0.0 <= threshold <= 1.0:
        raise RetentionError("threshold must be in [0,1]")
    if isinstance(eligibility, str):
        eligibility = Eligibility.parse(eligibility)

    unassigned = sorted(unassigned_set(alloc, volunteers.keys()))
    out = RetentionOutcome()
    if not unassigned:
        return out

    cohort = {vid: ledgers[vid].previous_potential for vid in volunteers}
    recipients = frozenset(v for v in unassigned if eligibility.admits(ledgers[v]))
    ctx = DividendContext(
        contingency_balance=contingency.balance,
        gamma=contingency.gamma,
        cohort_potentials=cohort,
        unassigned=frozenset(unassigned),
        recipients=recipients,
    )

    paid = []
    for vid in unassigned:
        d = dividend(vid, ctx) if pay_dividends and vid in recipients else 0.0
        update_cumulative_income(ledgers[vid], 0.0, d)
        paid.append(d)
    out.total_dividend = math.fsum(paid)

    scored = [i for i, vid in enumerate(unassigned) if ledgers[vid].rounds_active >= 2]
    scores: dict[str, float] = {}
    if scored:
        ids = [unassigned[i] for i in scored]
        sat = satisfaction_score(
            np.array([ledgers[v].previous_potential for v in ids]),
            ctx.cohort_max,
            np.array([ledgers[v].cumulative_income for v in ids]),
            np.array([volunteers[v].expense for v in ids]),
            np.array([ledgers[v].rounds_active for v in ids]),
            omega,
        )
        scores = dict(zip(ids, np.atleast_1d(sat).tolist()))

    for vid, d in zip(unassigned, paid):
        s = scores.get(vid)
        if drop and s is not None and s < threshold:
            out.dropped.add(vid)
            out.per_volunteer[vid] = VolunteerOutcome(d, s, DROPPED)
            out.events.append(
                {"round": round_, "volunteer_id": vid, "event": "quit", "satisfaction": s}
            )
        else:
            out.retained.add(vid)
            out.per_volunteer[vid] = VolunteerOutcome(d, s, RETAINED)
    return out
