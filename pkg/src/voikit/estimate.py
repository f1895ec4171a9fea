"""Result record and the shared "expected maximum minus maximum expectation"
estimator behind EVPI, EVPPI and every EVSI method."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import NumericError
from .rng import sequential_mean

KINDS = ("EVPI", "EVPPI", "EVSI")


@dataclass(frozen=True)
class VoiEstimate:
    """A value-of-information result, in currency units per person.

    ``mc_se`` is the Monte Carlo standard error of the per-row gain
    ``max_t m[s, t] - m[s, t_hat]`` where ``t_hat`` is the strategy with
    the highest mean; it is ``None`` when the method cannot supply one.
    """

    kind: str
    value: float
    mc_se: float | None = None
    method: str = ""
    design_N: int | None = None
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown VOI kind {self.kind!r}")
        if not (self.value >= 0.0):
            raise ValueError(f"VOI value must be >= 0, got {self.value}")
        if self.mc_se is not None and not (self.mc_se >= 0.0):
            raise ValueError("mc_se must be >= 0")

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "method": self.method,
            "N": self.design_N,
            "value": self.value,
            "mc_se": self.mc_se,
            "diagnostics": _jsonable(dict(self.diagnostics)),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


def expected_max_gain(values) -> tuple[float, float, float]:
    """``mean_s max_t v[s, t] - max_t mean_s v[s, t]`` for an S x T matrix.

    Returns ``(value, raw, se)``.  ``raw`` is the unclamped difference;
    ``value`` clamps negatives (which can only come from rounding) to 0.
    Sums run strictly left to right over rows.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
        raise ValueError("expected a non-empty S x T matrix")
    if not np.all(np.isfinite(v)):
        bad = int(np.argwhere(~np.isfinite(v))[0, 0])
        raise NumericError(f"non-finite value in row {bad + 1}")
    row_max = v.max(axis=1)
    first = sequential_mean(row_max)
    col_means = sequential_mean(v, axis=0)
    best = int(np.argmax(col_means))
    raw = float(first - col_means[best])
    n = v.shape[0]
    gain = row_max - v[:, best]
    se = float(np.std(gain, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return max(raw, 0.0), raw, se


def make_estimate(kind: str, matrix, method: str, design_N=None, **diagnostics) -> VoiEstimate:
    value, raw, se = expected_max_gain(matrix)
    diagnostics = dict(diagnostics)
    diagnostics["raw_value"] = raw
    return VoiEstimate(kind, value, se, method, design_N, diagnostics)
