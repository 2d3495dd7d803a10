"""Core value types shared across the simulator, plus CSV/JSON (de)serialization."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

EPS = 1e-9
"""Absolute tolerance for every monetary comparison."""

NEWCOMER_ALPHA = 0.1

TASK_COLUMNS = ("id", "budget", "skills", "arrival", "duration")
VOLUNTEER_COLUMNS = (
    "id",
    "expense",
    "skills",
    "arrival",
    "departure",
    "willingness",
    "bias",
    "rating",
)
SKILL_SEP = "|"


class DatasetError(ValueError):
    """Malformed or invalid input file."""


@dataclass(frozen=True)
class SkillCatalog:
    skills: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "skills", tuple(self.skills))
        if not self.skills:
            raise ValueError("skill catalog must not be empty")
        if len(set(self.skills)) != len(self.skills):
            raise ValueError("skill catalog contains duplicate identifiers")

    @classmethod
    def numbered(cls, size: int, prefix: str = "s") -> SkillCatalog:
        width = len(str(max(size - 1, 0)))
        return cls(tuple(f"{prefix}{i:0{width}d}" for i in range(size)))

    def __len__(self) -> int:
        return len(self.skills)

    def __contains__(self, skill: object) -> bool:
        return skill in self._lookup

    def __iter__(self):
        return iter(self.skills)

    @property
    def _lookup(self) -> dict[str, int]:
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {s: i for i, s in enumerate(self.skills)}
            object.__setattr__(self, "_index_cache", cached)
        return cached

    def index(self, skill: str) -> int:
        return self._lookup[skill]

    def to_dict(self) -> dict[str, Any]:
        return {"skills": list(self.skills)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SkillCatalog:
        return cls(tuple(d["skills"]))


@dataclass(frozen=True)
class Task:
    id: str
    budget: float
    required_skills: frozenset[str]
    arrival_time: float
    duration: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "required_skills", frozenset(self.required_skills))

    @property
    def expiration(self) -> float:
        return self.arrival_time + self.duration

    def to_row(self) -> dict[str, str]:
        return {
            "id": self.id,
            "budget": repr(float(self.budget)),
            "skills": SKILL_SEP.join(sorted(self.required_skills)),
            "arrival": repr(float(self.arrival_time)),
            "duration": repr(float(self.duration)),
        }

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> Task:
        return cls(
            id=row["id"],
            budget=float(row["budget"]),
            required_skills=parse_skills(row["skills"]),
            arrival_time=float(row["arrival"]),
            duration=float(row["duration"]),
        )

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["required_skills"] = sorted(self.required_skills)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Task:
        return cls(**{**d, "required_skills": frozenset(d["required_skills"])})


@dataclass(frozen=True)
class Volunteer:
    id: str
    expense: float
    skills: frozenset[str]
    arrival_time: float
    departure_time: float
    willingness: float
    bias: float
    rating: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "skills", frozenset(self.skills))

    def available_at(self, now: float) -> bool:
        return self.arrival_time <= now < self.departure_time

    def to_row(self) -> dict[str, str]:
        return {
            "id": self.id,
            "expense": repr(float(self.expense)),
            "skills": SKILL_SEP.join(sorted(self.skills)),
            "arrival": repr(float(self.arrival_time)),
            "departure": repr(float(self.departure_time)),
            "willingness": repr(float(self.willingness)),
            "bias": repr(float(self.bias)),
            "rating": repr(float(self.rating)),
        }

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> Volunteer:
        return cls(
            id=row["id"],
            expense=float(row["expense"]),
            skills=parse_skills(row["skills"]),
            arrival_time=float(row["arrival"]),
            departure_time=float(row["departure"]),
            willingness=float(row["willingness"]),
            bias=float(row["bias"]),
            rating=float(row["rating"]),
        )

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["skills"] = sorted(self.skills)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Volunteer:
        return cls(**{**d, "skills": frozenset(d["skills"])})


@dataclass
class VolunteerLedger:
    """Running per-volunteer history, mutated only by the round loop.

    ``previous_potential`` holds the potential from the round before the most
    recent refresh; dividends and satisfaction are computed from it.
    ``rounds_active`` counts the rounds the volunteer has been on the platform,
    including the current one once the round has started.
    """

    volunteer_id: str
    alloc_success: int = 0
    alloc_participated: int = 0
    rounds_since_assignment: int = 1
    consecutive_unassigned: int = 0
    potential: float = 0.0
    previous_potential: float = 0.0
    cumulative_income: float = 0.0
    aging_constant: float = NEWCOMER_ALPHA
    rounds_active: int = 0

    @property
    def is_newcomer(self) -> bool:
        return self.alloc_participated == 0

    def violations(self) -> list[str]:
        out = []
        if self.alloc_success > self.alloc_participated:
            out.append(f"ledger {self.volunteer_id}: alloc_success > alloc_participated")
        if self.rounds_since_assignment < 1:
            out.append(f"ledger {self.volunteer_id}: rounds_since_assignment < 1")
        if self.consecutive_unassigned < 0:
            out.append(f"ledger {self.volunteer_id}: consecutive_unassigned < 0")
        if not 0.0 <= self.potential <= 1.0:
            out.append(f"ledger {self.volunteer_id}: potential outside [0,1]")
        if self.cumulative_income < -EPS:
            out.append(f"ledger {self.volunteer_id}: negative cumulative income")
        if not 0.0 < self.aging_constant <= 1.0:
            out.append(f"ledger {self.volunteer_id}: aging constant outside (0,1]")
        return out

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> VolunteerLedger:
        return cls(**d)


@dataclass(frozen=True)
class AllocationMap:
    """Task id -> ordered ``(volunteer_id, remuneration)`` pairs for one round."""

    round: int
    entries: Mapping[str, tuple[tuple[str, float], ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        frozen = {t: tuple((v, float(rw)) for v, rw in picks) for t, picks in self.entries.items()}
        seen: dict[str, str] = {}
        for task_id, picks in frozen.items():
            for vid, rw in picks:
                if vid in seen:
                    raise ValueError(
                        f"volunteer {vid} assigned to both {seen[vid]} and {task_id}"
                    )
                if rw < 0:
                    raise ValueError(f"negative remuneration for {vid} on {task_id}")
                seen[vid] = task_id
        object.__setattr__(self, "entries", frozen)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, task_id: object) -> bool:
        return task_id in self.entries

    def assigned_ids(self) -> set[str]:
        return {vid for picks in self.entries.values() for vid, _ in picks}

    def volunteers(self, task_id: str) -> list[str]:
        return [vid for vid, _ in self.entries.get(task_id, ())]

    def payments(self) -> dict[str, float]:
        return {vid: rw for picks in self.entries.values() for vid, rw in picks}

    def total_paid(self, task_id: str) -> float:
        return math.fsum(rw for _, rw in self.entries.get(task_id, ()))

    def budget_violations(self, tasks: Mapping[str, Task]) -> list[str]:
        out = []
        for task_id in self.entries:
            paid = self.total_paid(task_id)
            if paid > tasks[task_id].budget + EPS:
                out.append(f"task {task_id}: paid {paid} exceeds budget {tasks[task_id].budget}")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "entries": {t: [[v, rw] for v, rw in picks] for t, picks in self.entries.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> AllocationMap:
        return cls(
            round=d["round"],
            entries={t: tuple((v, rw) for v, rw in picks) for t, picks in d["entries"].items()},
        )


@dataclass
class ContingencyLedger:
    balance: float = 0.0
    gamma: float = 0.5
    history: list[tuple[int, float, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.balance < 0:
            raise ValueError("contingency balance must be non-negative")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def deposit(self, amount: float) -> None:
        if amount < -EPS:
            raise ValueError(f"negative deposit {amount}")
        self.balance += max(amount, 0.0)

    def withdraw(self, amount: float) -> None:
        if amount < -EPS:
            raise ValueError(f"negative withdrawal {amount}")
        if amount > self.balance + EPS:
            raise ValueError(f"contingency underflow: withdrawing {amount} from {self.balance}")
        self.balance = max(self.balance - max(amount, 0.0), 0.0)

    def record(self, round_: int, inflow: float, outflow: float) -> None:
        self.history.append((round_, inflow, outflow))

    def to_dict(self) -> dict[str, Any]:
        return {
            "balance": self.balance,
            "gamma": self.gamma,
            "history": [list(h) for h in self.history],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ContingencyLedger:
        return cls(
            balance=d["balance"],
            gamma=d["gamma"],
            history=[tuple(h) for h in d["history"]],
        )


def parse_skills(cell: str) -> frozenset[str]:
    return frozenset(s.strip() for s in cell.split(SKILL_SEP) if s.strip())


def validate_world(
    catalog: SkillCatalog,
    tasks: Sequence[Task],
    volunteers: Sequence[Volunteer],
) -> list[str]:
    """Return every invariant violation found; an empty list means the world is valid."""
    out: list[str] = []
    seen_tasks: set[str] = set()
    for t in tasks:
        if t.id in seen_tasks:
            out.append(f"task {t.id}: duplicate id")
        seen_tasks.add(t.id)
        if not t.required_skills:
            out.append(f"task {t.id}: no required skills")
        for s in sorted(t.required_skills):
            if s not in catalog:
                out.append(f"task {t.id}: skill {s!r} not in catalog")
        if not t.budget >= 0 or not math.isfinite(t.budget):
            out.append(f"task {t.id}: budget {t.budget} must be >= 0")
        if not t.duration > 0:
            out.append(f"task {t.id}: duration {t.duration} must be > 0")
    seen_vols: set[str] = set()
    for v in volunteers:
        if v.id in seen_vols:
            out.append(f"volunteer {v.id}: duplicate id")
        seen_vols.add(v.id)
        for s in sorted(v.skills):
            if s not in catalog:
                out.append(f"volunteer {v.id}: skill {s!r} not in catalog")
        if not v.expense >= 0 or not math.isfinite(v.expense):
            out.append(f"volunteer {v.id}: expense {v.expense} must be >= 0")
        if not v.departure_time >= v.arrival_time:
            out.append(f"volunteer {v.id}: departure before arrival")
        for name in ("willingness", "bias", "rating"):
            value = getattr(v, name)
            if not 0.0 <= value <= 1.0:
                out.append(f"volunteer {v.id}: {name} {value} outside [0,1]")
    return out


# --- CSV I/O ---------------------------------------------------------------


def _read_rows(path: Path, columns: Sequence[str]) -> list[tuple[int, dict[str, str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None or not set(columns) <= set(header):
            raise DatasetError(f"{path}: missing or invalid header, expected {','.join(columns)}")
        rows = []
        for row in reader:
            if None in row or any(row.get(c) is None for c in columns):
                raise DatasetError(f"{path}:{reader.line_num}: wrong number of fields")
            rows.append((reader.line_num, row))
    return rows


def read_tasks_csv(path: str | Path) -> list[Task]:
    path = Path(path)
    out = []
    for line, row in _read_rows(path, TASK_COLUMNS):
        try:
            out.append(Task.from_row(row))
        except ValueError as exc:
            raise DatasetError(f"{path}:{line}: {exc}") from exc
    return out


def read_volunteers_csv(path: str | Path) -> list[Volunteer]:
    path = Path(path)
    out = []
    for line, row in _read_rows(path, VOLUNTEER_COLUMNS):
        try:
            out.append(Volunteer.from_row(row))
        except ValueError as exc:
            raise DatasetError(f"{path}:{line}: {exc}") from exc
    return out


def _write_rows(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, str]]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_tasks_csv(path: str | Path, tasks: Iterable[Task]) -> None:
    _write_rows(Path(path), TASK_COLUMNS, (t.to_row() for t in tasks))


def write_volunteers_csv(path: str | Path, volunteers: Iterable[Volunteer]) -> None:
    _write_rows(Path(path), VOLUNTEER_COLUMNS, (v.to_row() for v in volunteers))
