"""Per-round report record and the summary statistics used across outputs."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping, Sequence

import numpy as np


def median(values: Sequence[float]) -> float | None:
    """Median; an even-sized pool averages the two central values."""
    if len(values) == 0:
        return None
    return float(np.median(np.asarray(values, dtype=float)))


def iqr(values: Sequence[float]) -> float | None:
    """Q3 - Q1 with linear interpolation between order statistics."""
    if len(values) == 0:
        return None
    q1, q3 = np.percentile(np.asarray(values, dtype=float), [25, 75], method="linear")
    return float(q3 - q1)


def mean(values: Sequence[float]) -> float | None:
    if len(values) == 0:
        return None
    return float(np.mean(np.asarray(values, dtype=float)))


@dataclass(frozen=True)
class RoundReport:
    round: int
    policy: str
    completed_tasks: int = 0
    retained: int = 0
    dropped: int = 0
    newcomers_admitted: int = 0
    tasks_admitted: int = 0
    departed: int = 0
    expired_tasks: int = 0
    active_volunteers: int = 0
    open_tasks: int = 0
    assigned_volunteers: int = 0
    total_remuneration: float = 0.0
    total_dividend: float = 0.0
    avg_remuneration: float = 0.0
    sat_count: int = 0
    sat_mean: float | None = None
    sat_median: float | None = None
    sat_iqr: float | None = None
    contingency: float = 0.0

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_row(self) -> dict[str, str]:
        return {k: _fmt(v) for k, v in asdict(self).items()}

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> RoundReport:
        kw: dict[str, Any] = {}
        for f in fields(cls):
            raw = row[f.name]
            if f.name == "policy":
                kw[f.name] = raw
            elif raw == "":
                kw[f.name] = None
            elif f.type in ("int",):
                kw[f.name] = int(raw)
            else:
                kw[f.name] = float(raw)
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)
