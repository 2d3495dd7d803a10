"""Potential level of a volunteer: aging factor, sigma components, sigmoid init, update.

Every function accepts plain floats or numpy arrays (elementwise), so the round
loop can refresh a whole cohort in one call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PotentialDomainError(ValueError):
    pass


def _out(x):
    arr = np.asarray(x)
    return float(arr) if arr.ndim == 0 else arr


def aging_factor(alpha, l):
    """``alpha ** (1/l)``; grows toward 1 the longer a volunteer waits."""
    a = np.asarray(alpha, dtype=float)
    n = np.asarray(l, dtype=float)
    if not np.all((a > 0) & (a <= 1)):
        raise PotentialDomainError(f"aging constant must be in (0,1], got {alpha}")
    if not np.all(n >= 1):
        raise PotentialDomainError(f"rounds since assignment must be >= 1, got {l}")
    return _out(np.power(a, 1.0 / n))


def success_ratio(alloc_success, alloc_participated):
    s = np.asarray(alloc_success, dtype=float)
    p = np.asarray(alloc_participated, dtype=float)
    if np.any(s < 0) or np.any(s > p):
        raise PotentialDomainError("need 0 <= alloc_success <= alloc_participated")
    # 0/0 for newcomers is taken as 0.
    return _out(np.divide(s, p, out=np.zeros(np.broadcast(s, p).shape), where=p > 0))


def sigma_value(alloc_success, alloc_participated, skill_count, catalog_size, alpha, l):
    c = np.asarray(catalog_size, dtype=float)
    k = np.asarray(skill_count, dtype=float)
    if np.any(c <= 0):
        raise PotentialDomainError("catalog size must be positive")
    if np.any(k < 0) or np.any(k > c):
        raise PotentialDomainError("skill count must lie in [0, catalog size]")
    return _out(
        np.asarray(success_ratio(alloc_success, alloc_participated))
        + k / c
        + np.asarray(aging_factor(alpha, l))
    )


@dataclass(frozen=True)
class PotentialInputs:
    alloc_success: int
    alloc_participated: int
    skill_count: int
    catalog_size: int
    aging_constant: float
    rounds_since_assignment: int
    previous_potential: float = 0.0

    def __post_init__(self) -> None:
        if self.catalog_size <= 0:
            raise PotentialDomainError("catalog size must be positive")
        if not 0 <= self.alloc_success <= self.alloc_participated:
            raise PotentialDomainError("need 0 <= alloc_success <= alloc_participated")
        if not 0.0 <= self.previous_potential <= 1.0:
            raise PotentialDomainError("previous potential must be in [0,1]")


def sigma(inputs: PotentialInputs) -> float:
    return sigma_value(
        inputs.alloc_success,
        inputs.alloc_participated,
        inputs.skill_count,
        inputs.catalog_size,
        inputs.aging_constant,
        inputs.rounds_since_assignment,
    )


def potential_init(sigma_val):
    s = np.asarray(sigma_val, dtype=float)
    if not np.all((s >= 0) & (s <= 3)):
        raise PotentialDomainError(f"sigma must be in [0,3], got {sigma_val}")
    return _out(1.0 / (1.0 + np.exp(-s)))


def potential_update(previous, init):
    prev = np.asarray(previous, dtype=float)
    ini = np.asarray(init, dtype=float)
    if not np.all((prev >= 0) & (prev <= 1) & (ini >= 0) & (ini <= 1)):
        raise PotentialDomainError("potential arguments must be in [0,1]")
    # Clamp guards against a one-ulp overshoot above 1.
    return _out(np.minimum((1.0 - prev) * ini + prev, 1.0))


def next_potential(inputs: PotentialInputs) -> float:
    return potential_update(inputs.previous_potential, potential_init(sigma(inputs)))
