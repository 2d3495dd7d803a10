"""Round-by-round marketplace simulation: arrivals, assignment, payments, retention.

A round ``r`` covers the logical interval ``[(r-1)*L, r*L)`` and is processed
at its end, ``r*L``. Entities arriving during the interval join that round's
batch. A volunteer takes part only while ``arrival <= r*L < departure``; a task
stays open until its expiration falls before the start of a round's interval.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .assignment import RemunerationPolicy, SkillEncoder, UtilityWeights, assign_round
from .incentive import replenish_contingency, satisfaction_score
from .model import (
    EPS,
    AllocationMap,
    ContingencyLedger,
    DatasetError,
    SkillCatalog,
    Task,
    Volunteer,
    VolunteerLedger,
    read_tasks_csv,
    read_volunteers_csv,
    validate_world,
)
from .potential import potential_init, potential_update, sigma_value
from .report import RoundReport, iqr, mean, median
from .vrave import Eligibility, run_vrave

log = logging.getLogger(__name__)

POLICIES = ("vrave", "fixed", "training", "increasing")
_POLICY_KIND = {
    "vrave": "cost_coverage",
    "fixed": "fixed",
    "training": "training",
    "increasing": "increasing",
}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    rounds: int = 6
    round_length: float = 50.0
    replications: int = 50
    task_rate: float = 5.0
    volunteer_rate: float = 75.0
    gamma: float = 0.5
    omega: float = 0.5
    threshold: float = 0.75
    alpha: float = 0.5
    newcomer_alpha: float = 0.1
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    policy: str = "vrave"
    dividend_eligibility: str = "all_unassigned"
    initial_contingency: float = 0.0
    rng_seed: int = 0
    # None -> derived from the template source's mean expense (slope = base / 6).
    baseline_base: float | None = None
    baseline_slope: float | None = None
    retention_enabled: bool = True
    baseline_attrition: bool = False
    catalog_size: int = 50
    volunteer_skill_mean: float = 7.0
    task_skill_mean: float = 10.0
    expense_mean: float = 39.9
    expense_sd: float = 8.0
    budget_mean: float = 428.0
    budget_sd: float = 80.0
    duration_mean: float = 7.5
    volunteer_stay_mean: float = 150.0
    tasks_path: str | None = None
    volunteers_path: str | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        errors = []
        if self.rounds < 1:
            errors.append("rounds must be >= 1")
        if self.replications < 0:
            errors.append("replications must be >= 0")
        if self.round_length <= 0:
            errors.append("round_length must be > 0")
        if self.task_rate <= 0 or self.volunteer_rate <= 0:
            errors.append("arrival rates must be > 0")
        if not 0.0 <= self.threshold <= 1.0:
            errors.append("threshold must be in [0,1]")
        if not 0.0 <= self.omega <= 1.0:
            errors.append("omega must be in [0,1]")
        if not 0.0 < self.gamma <= 1.0:
            errors.append("gamma must be in (0,1] so dividends never exceed the fund")
        if not 0.0 < self.alpha <= 1.0 or not 0.0 < self.newcomer_alpha <= 1.0:
            errors.append("aging constants must be in (0,1]")
        if self.policy not in POLICIES:
            errors.append(f"policy must be one of {POLICIES}")
        if self.initial_contingency < 0:
            errors.append("initial_contingency must be >= 0")
        if self.catalog_size < 1:
            errors.append("catalog_size must be >= 1")
        if self.workers < 1:
            errors.append("workers must be >= 1")
        if (self.tasks_path is None) != (self.volunteers_path is None):
            errors.append("tasks_path and volunteers_path must be given together")
        try:
            UtilityWeights(*self.weights)
            Eligibility.parse(self.dividend_eligibility)
        except ValueError as exc:
            errors.append(str(exc))
        if errors:
            raise ValueError("; ".join(errors))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SimulationConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if isinstance(d.get("weights"), Mapping):
            w = d["weights"]
            d["weights"] = (w["w_skill"], w["w_willingness"], w["w_cost"])
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["weights"] = list(self.weights)
        return d

    def replace(self, **kw) -> SimulationConfig:
        return dataclasses.replace(self, **kw)

    @property
    def utility_weights(self) -> UtilityWeights:
        return UtilityWeights(*self.weights)


# --- template sources ---------------------------------------------------------


def _truncated_normal(rng: np.random.Generator, mu: float, sd: float, lo: float, n: int) -> np.ndarray:
    out = rng.normal(mu, sd, n)
    bad = out < lo
    while bad.any():
        out[bad] = rng.normal(mu, sd, int(bad.sum()))
        bad = out < lo
    return out


def _positive_poisson(rng: np.random.Generator, lam: float, hi: int, n: int) -> np.ndarray:
    out = rng.poisson(lam, n)
    bad = (out < 1) | (out > hi)
    while bad.any():
        out[bad] = rng.poisson(lam, int(bad.sum()))
        bad = (out < 1) | (out > hi)
    return out


class SyntheticSource:
    """Parametric sampler driven by the configured marketplace moments."""

    def __init__(self, config: SimulationConfig):
        self.config = config
        self.catalog = SkillCatalog.numbered(config.catalog_size)

    @property
    def mean_expense(self) -> float:
        return self.config.expense_mean

    def supplies(self, kind: str) -> bool:
        return True

    def _skill_sets(self, rng: np.random.Generator, lam: float, n: int) -> list[frozenset[str]]:
        size = len(self.catalog)
        counts = _positive_poisson(rng, lam, size, n)
        order = np.argsort(rng.random((n, size)), axis=1)
        names = self.catalog.skills
        return [frozenset(names[j] for j in order[i, : counts[i]]) for i in range(n)]

    def task_attrs(self, rng: np.random.Generator, n: int) -> list[tuple]:
        c = self.config
        skills = self._skill_sets(rng, c.task_skill_mean, n)
        budget = _truncated_normal(rng, c.budget_mean, c.budget_sd, c.expense_mean, n)
        duration = rng.exponential(c.duration_mean, n)
        return list(zip(budget.tolist(), skills, duration.tolist()))

    def volunteer_attrs(self, rng: np.random.Generator, n: int) -> list[tuple]:
        c = self.config
        skills = self._skill_sets(rng, c.volunteer_skill_mean, n)
        expense = _truncated_normal(rng, c.expense_mean, c.expense_sd, 1.0, n)
        stay = rng.exponential(c.volunteer_stay_mean, n)
        wbr = rng.random((n, 3))
        return [
            (expense[i], skills[i], stay[i], wbr[i, 0], wbr[i, 1], wbr[i, 2])
            for i in range(n)
        ]


class DatasetSource:
    """Resamples loaded rows with replacement as attribute templates.

    An empty side yields no arrivals of that kind.
    """

    def __init__(self, tasks: Sequence[Task], volunteers: Sequence[Volunteer], catalog: SkillCatalog):
        self.tasks = list(tasks)
        self.volunteers = list(volunteers)
        self.catalog = catalog

    @property
    def mean_expense(self) -> float:
        if not self.volunteers:
            return 0.0
        return math.fsum(v.expense for v in self.volunteers) / len(self.volunteers)

    def supplies(self, kind: str) -> bool:
        return bool(self.tasks if kind == "task" else self.volunteers)

    def task_attrs(self, rng: np.random.Generator, n: int) -> list[tuple]:
        idx = rng.integers(0, len(self.tasks), n)
        rows = [self.tasks[i] for i in idx]
        return [(t.budget, t.required_skills, t.duration) for t in rows]

    def volunteer_attrs(self, rng: np.random.Generator, n: int) -> list[tuple]:
        idx = rng.integers(0, len(self.volunteers), n)
        rows = [self.volunteers[i] for i in idx]
        return [
            (v.expense, v.skills, v.departure_time - v.arrival_time, v.willingness, v.bias, v.rating)
            for v in rows
        ]


def make_source(config: SimulationConfig) -> SyntheticSource | DatasetSource:
    if config.tasks_path is None:
        return SyntheticSource(config)
    tasks, volunteers, catalog = load_dataset(config.tasks_path, config.volunteers_path)
    return DatasetSource(tasks, volunteers, catalog)


def arrival_stamps(rate: float, span: float, rng: np.random.Generator, start: float = 0.0) -> np.ndarray:
    """Poisson(rate) arrivals per unit, stamped uniformly inside their unit."""
    if rate <= 0:
        raise ValueError("rate must be > 0")
    if span <= 0:
        return np.zeros(0)
    whole = int(math.floor(span))
    widths = np.ones(whole)
    if span - whole > 0:
        widths = np.append(widths, span - whole)
    counts = rng.poisson(rate * widths)
    unit_start = np.repeat(np.arange(len(widths), dtype=float), counts)
    offsets = rng.random(int(counts.sum())) * np.repeat(widths, counts)
    return np.sort(start + unit_start + offsets)


def generate_arrivals(
    rate: float,
    span: float,
    source: SyntheticSource | DatasetSource,
    rng: np.random.Generator,
    *,
    kind: str,
    start: float = 0.0,
    first_serial: int = 0,
) -> list[Task] | list[Volunteer]:
    if kind not in ("task", "volunteer"):
        raise ValueError(f"unknown entity kind {kind!r}")
    if not source.supplies(kind):
        return []
    stamps = arrival_stamps(rate, span, rng, start)
    n = len(stamps)
    if kind == "task":
        attrs = source.task_attrs(rng, n)
        return [
            Task(f"t{first_serial + i:08d}", float(b), s, float(stamps[i]), float(d))
            for i, (b, s, d) in enumerate(attrs)
        ]
    if kind == "volunteer":
        attrs = source.volunteer_attrs(rng, n)
        return [
            Volunteer(
                f"v{first_serial + i:08d}",
                float(e),
                s,
                float(stamps[i]),
                float(stamps[i] + stay),
                float(w),
                float(b),
                float(r),
            )
            for i, (e, s, stay, w, b, r) in enumerate(attrs)
        ]
    raise ValueError(f"unknown entity kind {kind!r}")


def load_dataset(tasks_path, volunteers_path) -> tuple[list[Task], list[Volunteer], SkillCatalog]:
    """Read both CSVs, drop duplicate ids (first wins), and validate.

    The skill catalog is the sorted union of every skill mentioned.
    """
    tasks = _dedupe(read_tasks_csv(tasks_path), str(tasks_path))
    volunteers = _dedupe(read_volunteers_csv(volunteers_path), str(volunteers_path))
    universe = set().union(*(t.required_skills for t in tasks), *(v.skills for v in volunteers))
    # An empty dataset still needs a non-empty catalog; the placeholder is never required.
    catalog = SkillCatalog(tuple(sorted(universe)) or ("_",))
    problems = validate_world(catalog, tasks, volunteers)
    if problems:
        raise DatasetError("dataset failed validation: " + "; ".join(problems[:10]))
    return tasks, volunteers, catalog


def _dedupe(items, where: str):
    seen: set[str] = set()
    out = []
    for item in items:
        if item.id in seen:
            log.warning("%s: duplicate id %s dropped", where, item.id)
            continue
        seen.add(item.id)
        out.append(item)
    return out


# --- world state & round loop ------------------------------------------------


@dataclass
class WorldState:
    catalog: SkillCatalog
    contingency: ContingencyLedger
    round: int = 0
    clock: float = 0.0
    open_tasks: dict[str, Task] = field(default_factory=dict)
    active: dict[str, Volunteer] = field(default_factory=dict)
    ledgers: dict[str, VolunteerLedger] = field(default_factory=dict)
    round_reports: list[RoundReport] = field(default_factory=list)
    retired: dict[str, VolunteerLedger] = field(default_factory=dict)
    dropped_ids: set[str] = field(default_factory=set)
    events: list[dict] = field(default_factory=list)
    allocations: list[AllocationMap] = field(default_factory=list)
    sat_scores: list[list[float]] = field(default_factory=list)
    completed_budget: float = 0.0
    paid_remuneration: float = 0.0
    paid_dividends: float = 0.0
    initial_contingency: float = 0.0
    task_serial: int = 0
    volunteer_serial: int = 0
    keep_allocations: bool = False
    _masks: dict[str, int] = field(default_factory=dict, repr=False)

    @classmethod
    def fresh(cls, config: SimulationConfig, catalog: SkillCatalog) -> WorldState:
        return cls(
            catalog=catalog,
            contingency=ContingencyLedger(config.initial_contingency, config.gamma),
            initial_contingency=config.initial_contingency,
        )

    def conservation_residual(self) -> float:
        """Money in minus money out; zero up to rounding when nothing leaked."""
        income = math.fsum(
            [l.cumulative_income for l in self.ledgers.values()]
            + [l.cumulative_income for l in self.retired.values()]
        )
        return (self.initial_contingency + self.completed_budget) - (income + self.contingency.balance)


def _policy_for(config: SimulationConfig, mean_expense: float) -> RemunerationPolicy:
    kind = _POLICY_KIND[config.policy]
    base = config.baseline_base if config.baseline_base is not None else mean_expense
    slope = config.baseline_slope if config.baseline_slope is not None else base / 6.0
    if kind == "cost_coverage" or kind == "fixed":
        return RemunerationPolicy(kind)
    return RemunerationPolicy(kind, base=base, slope=slope)


def run_round(
    state: WorldState,
    config: SimulationConfig,
    new_tasks: Sequence[Task] = (),
    new_volunteers: Sequence[Volunteer] = (),
    *,
    policy: RemunerationPolicy | None = None,
) -> tuple[WorldState, RoundReport]:
    """Advance ``state`` by one round (mutating it) and return it with the round's report."""
    r = state.round + 1
    L = config.round_length
    start = (r - 1) * L
    policy = policy or _policy_for(config, config.expense_mean)
    encoder = SkillEncoder(state.catalog)

    # (1) arrivals, expirations, departures. Volunteers must still be present
    # when the batch is processed at the end of the interval; tasks stay
    # eligible for the batch they arrived in.
    now = r * L
    expired = [tid for tid, t in state.open_tasks.items() if t.expiration < start]
    for tid in expired:
        del state.open_tasks[tid]
    for t in new_tasks:
        if t.id in state.open_tasks:
            raise SimulationError(f"task id {t.id} admitted twice")
        state.open_tasks[t.id] = t
    for v in new_volunteers:
        if v.id in state.active or v.id in state.retired:
            raise SimulationError(f"volunteer id {v.id} admitted twice")
        state.active[v.id] = v
        state.ledgers[v.id] = VolunteerLedger(v.id, aging_constant=config.newcomer_alpha)
        state._masks[v.id] = encoder.int_mask(v.skills)
    departed = [vid for vid, v in state.active.items() if v.departure_time <= now]
    for vid in departed:
        del state.active[vid]
        state.retired[vid] = state.ledgers.pop(vid)
        state._masks.pop(vid, None)
    state.round = r
    state.clock = now

    ids = list(state.active)
    ledgers = [state.ledgers[v] for v in ids]

    # (2) refresh potentials for the whole cohort
    if ids:
        prev = np.array([l.potential for l in ledgers])
        sig = sigma_value(
            np.array([l.alloc_success for l in ledgers]),
            np.array([l.alloc_participated for l in ledgers]),
            np.array([len(state.active[v].skills) for v in ids]),
            len(state.catalog),
            np.array([l.aging_constant for l in ledgers]),
            np.array([l.rounds_since_assignment for l in ledgers]),
        )
        new = potential_update(prev, potential_init(sig))
        for l, p, n in zip(ledgers, prev.tolist(), np.atleast_1d(new).tolist()):
            l.previous_potential = p
            l.potential = n
            l.rounds_active += 1

    # (3) assignment
    vols = [state.active[v] for v in ids]
    masks = encoder.rows(state._masks[v] for v in ids)
    alloc = assign_round(
        list(state.open_tasks.values()), vols, config.utility_weights, policy, r,
        state.catalog, masks=masks,
    )
    if state.keep_allocations:
        state.allocations.append(alloc)

    # (4) payments, completion, contingency inflow
    pay = alloc.payments()
    for vid, rw in pay.items():
        state.ledgers[vid].cumulative_income += rw
    completed = []
    for tid in alloc.entries:
        t = state.open_tasks.pop(tid)
        completed.append((t.budget, alloc.total_paid(tid)))
    inflow_before = state.contingency.balance
    replenish_contingency(state.contingency, completed)
    inflow = state.contingency.balance - inflow_before
    round_remuneration = math.fsum(pay.values())
    state.completed_budget += math.fsum(b for b, _ in completed)
    state.paid_remuneration += round_remuneration

    # (5) retention pass (dividends only under the WCB policy)
    wcb = config.policy == "vrave"
    outcome = run_vrave(
        state.contingency,
        r,
        alloc,
        state.active,
        state.ledgers,
        config.threshold,
        omega=config.omega,
        eligibility=config.dividend_eligibility,
        drop=config.retention_enabled and (wcb or config.baseline_attrition),
        pay_dividends=wcb,
    )
    div = outcome.total_dividend

    # satisfaction of assigned volunteers, for reporting only
    scores = [o.satisfaction for o in outcome.per_volunteer.values() if o.satisfaction is not None]
    assigned_scored = [v for v in pay if state.ledgers[v].rounds_active >= 2]
    if assigned_scored:
        cohort_max = max(l.previous_potential for l in ledgers)
        s = satisfaction_score(
            np.array([state.ledgers[v].previous_potential for v in assigned_scored]),
            cohort_max,
            np.array([state.ledgers[v].cumulative_income for v in assigned_scored]),
            np.array([state.active[v].expense for v in assigned_scored]),
            np.array([state.ledgers[v].rounds_active for v in assigned_scored]),
            config.omega,
        )
        scores.extend(np.atleast_1d(s).tolist())
    state.sat_scores.append(scores)

    # (6) fund debit
    if div > state.contingency.balance + EPS:
        raise SimulationError(f"round {r}: dividends {div} exceed contingency {state.contingency.balance}")
    state.contingency.withdraw(div)
    state.contingency.record(r, inflow, div)
    state.paid_dividends += div

    # (7) ledgers
    for vid in ids:
        l = state.ledgers[vid]
        l.alloc_participated += 1
        l.aging_constant = config.alpha
        if vid in pay:
            l.alloc_success += 1
            l.consecutive_unassigned = 0
            l.rounds_since_assignment = 1
        else:
            l.consecutive_unassigned += 1
            l.rounds_since_assignment += 1
    for vid in outcome.dropped:
        del state.active[vid]
        state.retired[vid] = state.ledgers.pop(vid)
        state._masks.pop(vid, None)
        state.dropped_ids.add(vid)
    state.events.extend(outcome.events)

    dividend_recipients = sum(1 for o in outcome.per_volunteer.values() if o.dividend > 0)
    payees = len(pay) + dividend_recipients
    report = RoundReport(
        round=r,
        policy=config.policy,
        completed_tasks=len(completed),
        retained=len(outcome.retained),
        dropped=len(outcome.dropped),
        newcomers_admitted=len(new_volunteers),
        tasks_admitted=len(new_tasks),
        departed=len(departed),
        expired_tasks=len(expired),
        active_volunteers=len(state.active),
        open_tasks=len(state.open_tasks),
        assigned_volunteers=len(pay),
        total_remuneration=round_remuneration,
        total_dividend=div,
        avg_remuneration=(round_remuneration + div) / payees if payees else 0.0,
        sat_count=len(scores),
        sat_mean=mean(scores),
        sat_median=median(scores),
        sat_iqr=iqr(scores),
        contingency=state.contingency.balance,
    )
    state.round_reports.append(report)
    return state, report


# --- experiment driver -------------------------------------------------------


@dataclass
class ReplicationResult:
    index: int
    seed: int
    reports: list[RoundReport]
    conservation_residual: float
    scores: list[list[float]] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)


@dataclass
class ExperimentBundle:
    config: SimulationConfig
    replications: list[ReplicationResult]
    baseline_base: float | None = None
    baseline_slope: float | None = None

    @property
    def policy(self) -> str:
        return self.config.policy

    def summary(self) -> dict[str, Any]:
        return summarize(self.replications)


def replication_seed(seed: int, k: int) -> int:
    return int(seed) ^ int(k)


def run_replication(
    config: SimulationConfig,
    k: int,
    source: SyntheticSource | DatasetSource | None = None,
    *,
    collect_scores: bool = False,
) -> ReplicationResult:
    source = source or make_source(config)
    seed = replication_seed(config.rng_seed, k)
    state = WorldState.fresh(config, source.catalog)
    policy = _policy_for(config, source.mean_expense)
    L = config.round_length
    for r in range(1, config.rounds + 1):
        # Stream depends on (seed, round) only, so every policy sees the same arrivals.
        rng = np.random.default_rng([seed, r])
        tasks = generate_arrivals(
            config.task_rate, L, source, rng, kind="task",
            start=(r - 1) * L, first_serial=state.task_serial,
        )
        vols = generate_arrivals(
            config.volunteer_rate, L, source, rng, kind="volunteer",
            start=(r - 1) * L, first_serial=state.volunteer_serial,
        )
        state.task_serial += len(tasks)
        state.volunteer_serial += len(vols)
        try:
            run_round(state, config, tasks, vols, policy=policy)
        except (ValueError, SimulationError) as exc:
            raise SimulationError(f"replication {k}, round {r}: {exc}") from exc
    residual = state.conservation_residual()
    if abs(residual) > 1e-6:
        raise SimulationError(f"replication {k}: money not conserved (residual {residual})")
    return ReplicationResult(
        index=k,
        seed=seed,
        reports=list(state.round_reports),
        conservation_residual=residual,
        scores=state.sat_scores if collect_scores else [],
        events=state.events,
    )


def _run_one(args) -> ReplicationResult:
    config, k, collect = args
    return run_replication(config, k, collect_scores=collect)


def run_experiment(config: SimulationConfig, *, collect_scores: bool = False) -> ExperimentBundle:
    source = make_source(config)
    policy = _policy_for(config, source.mean_expense)
    if config.workers > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            reps = list(
                pool.map(_run_one, [(config, k, collect_scores) for k in range(config.replications)])
            )
    else:
        reps = [
            run_replication(config, k, source, collect_scores=collect_scores)
            for k in range(config.replications)
        ]
    return ExperimentBundle(
        config=config,
        replications=reps,
        baseline_base=policy.base if policy.kind in ("training", "increasing") else None,
        baseline_slope=policy.slope if policy.kind in ("training", "increasing") else None,
    )


METRICS = {
    "satisfaction": "sat_mean",
    "retained": "retained",
    "completed_tasks": "completed_tasks",
    "avg_remuneration": "avg_remuneration",
}


def summarize(replications: Sequence[ReplicationResult]) -> dict[str, Any]:
    """Mean/median/IQR of each headline metric over all (replication, round) cells.

    Rounds without a satisfaction score (nobody past their first round) are
    skipped for the satisfaction metric.
    """
    out: dict[str, Any] = {}
    for name, column in METRICS.items():
        values = [
            getattr(rep, column)
            for r in replications
            for rep in r.reports
            if getattr(rep, column) is not None
        ]
        out[name] = {"mean": mean(values) or 0.0, "median": median(values) or 0.0,
                     "iqr": iqr(values) or 0.0, "n": len(values)}
    return out
