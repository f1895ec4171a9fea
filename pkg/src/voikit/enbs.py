"""Population scaling, expected net benefit of sampling and the curve of
optimal sample size.

Discounting starts in year 1: the first year's population is undiscounted.
No interpolation happens between evaluated sample sizes.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError
from .estimate import VoiEstimate


@dataclass(frozen=True)
class PopulationSpec:
    incidence: float  # people per year
    horizon: int  # years
    discount_rate: float = 0.0

    def __post_init__(self):
        if self.incidence < 0 or self.discount_rate < 0:
            raise DataError("incidence and discount rate must be >= 0")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise DataError("horizon must be a whole number of years >= 1")

    @property
    def multiplier(self) -> float:
        """Discounted number of people who benefit."""
        total = 0.0
        for y in range(int(self.horizon)):
            total += self.incidence / (1.0 + self.discount_rate) ** y
        return total


@dataclass(frozen=True)
class CostModel:
    fixed: float = 0.0
    per_participant: float = 0.0

    def __post_init__(self):
        if self.fixed < 0 or self.per_participant < 0:
            raise DataError("study costs must be >= 0")

    def __call__(self, n) -> float:
        return self.fixed + self.per_participant * n


@dataclass(frozen=True)
class EnbsPoint:
    N: int
    evsi_pp: float
    evsi_pop: float
    cost: float
    enbs: float


@dataclass(frozen=True)
class EnbsCurve:
    points: tuple[EnbsPoint, ...]
    optimal_N: int
    max_enbs: float

    @property
    def worthwhile(self) -> bool:
        return self.max_enbs >= 0

    @property
    def flag(self) -> str | None:
        return None if self.worthwhile else "research not worthwhile"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("N,evsi_pp,evsi_pop,cost,enbs\n")
        for p in self.points:
            buf.write(f"{p.N},{p.evsi_pp!r},{p.evsi_pop!r},{p.cost!r},{p.enbs!r}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {"optimal_N": self.optimal_N, "max_enbs": self.max_enbs,
                "worthwhile": self.worthwhile, "flag": self.flag}

    def to_json(self) -> str:
        body = self.summary()
        body["points"] = [p.__dict__ for p in self.points]
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def population_scale(evsi_per_person: float, pop: PopulationSpec) -> float:
    if evsi_per_person < 0:
        raise DataError("per-person value must be >= 0")
    return evsi_per_person * pop.multiplier


def enbs_curve(evsi_by_N: Sequence, pop: PopulationSpec, cost: CostModel) -> EnbsCurve:
    """ENBS at each evaluated N; the optimum is the first maximum in N order.

    ``evsi_by_N`` holds ``(N, estimate)`` pairs where the estimate is a
    :class:`VoiEstimate` or a per-person number.
    """
    if not len(evsi_by_N):
        raise DataError("at least one (N, EVSI) pair is required")
    pairs = sorted(((int(n), float(e.value if isinstance(e, VoiEstimate) else e)) for n, e in evsi_by_N),
                   key=lambda p: p[0])
    ns = [n for n, _ in pairs]
    if len(set(ns)) != len(ns):
        raise DataError("sample sizes must be distinct")
    if ns[0] <= 0:
        raise DataError("sample sizes must be positive")
    points = []
    for n, v in pairs:
        pop_v = population_scale(v, pop)
        c = cost(n)
        points.append(EnbsPoint(n, v, pop_v, c, pop_v - c))
    enbs = np.array([p.enbs for p in points])
    best = int(np.argmax(enbs))
    return EnbsCurve(tuple(points), points[best].N, float(enbs[best]))
