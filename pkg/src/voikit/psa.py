"""PSA datasets, net benefit arithmetic, EVPI and decision-uncertainty curves.

CSV layout
----------
One header row, comma separated, ``.`` decimal point.  Columns:

* ``sim`` (optional on read, always written): 1..S
* parameters: any other name
* outcomes: ``qaly.t<k>`` (or ``effect.t<k>``) and ``cost.t<k>``
* augmented datasets append ``nmb.t<k>`` then ``enb.t<k>``; ``evppi.t<k>``
  is accepted as an alias for ``enb.t<k>`` on read.

Numbers are written with ``repr``, the shortest decimal that reads back to
the identical double, so ``load(save(ds))`` is exact.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence, Union

import numpy as np

from .errors import FormatError, NumericError, ParseError, SchemaError
from .estimate import VoiEstimate, make_estimate
from .rng import sequential_mean

_OUTCOME_RE = re.compile(r"^(qaly|effect|cost|nmb|enb|evppi)\.t(\d+)$")
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Strategy:
    index: int
    label: str

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("strategy indices are 1-based")


def default_strategies(n: int, labels: Sequence[str] | None = None) -> tuple[Strategy, ...]:
    labels = list(labels) if labels is not None else [f"t{k}" for k in range(1, n + 1)]
    if len(labels) != n:
        raise ValueError("one label per strategy required")
    return tuple(Strategy(k, lab) for k, lab in enumerate(labels, start=1))


def _check_strategies(strategies):
    idx = [s.index for s in strategies]
    if idx != list(range(1, len(idx) + 1)):
        raise SchemaError(f"strategy indices must be 1..T in order, got {idx}")
    if len(idx) < 2:
        raise SchemaError("at least two strategies are required")


@dataclass(frozen=True)
class WtpThreshold:
    """Willingness to pay per unit of effect (currency per QALY)."""

    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value > 0):
            raise ValueError(f"willingness-to-pay must be > 0, got {self.value}")

    def __float__(self):
        return float(self.value)


def as_threshold(lam) -> WtpThreshold:
    return lam if isinstance(lam, WtpThreshold) else WtpThreshold(float(lam))


@dataclass(frozen=True, eq=False)
class PsaDataset:
    """S joint draws of parameters and per-strategy (effect, cost).

    ``effects``/``costs`` are S x T.  They may be ``None`` only for the
    base of an augmented dataset read from a file that carries net
    benefit columns but no raw outcomes.
    """

    parameter_names: tuple[str, ...]
    params: np.ndarray
    strategies: tuple[Strategy, ...]
    effects: np.ndarray | None
    costs: np.ndarray | None
    effect_label: str = "qaly"

    def __post_init__(self):
        object.__setattr__(self, "parameter_names", tuple(self.parameter_names))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        params = _frozen(self.params)
        if params.ndim == 1:
            params = params.reshape(-1, 1) if len(self.parameter_names) == 1 else params.reshape(-1, 0)
            params.setflags(write=False)
        object.__setattr__(self, "params", params)
        _check_strategies(self.strategies)
        if len(set(self.parameter_names)) != len(self.parameter_names):
            raise SchemaError("duplicate parameter names")
        if params.shape[1] != len(self.parameter_names):
            raise SchemaError("parameter matrix width does not match parameter names")
        if (self.effects is None) != (self.costs is None):
            raise SchemaError("every strategy needs both an effect and a cost column")
        n = params.shape[0]
        if self.effects is not None:
            eff, cost = _frozen(self.effects), _frozen(self.costs)
            t = len(self.strategies)
            if eff.shape != (n, t) or cost.shape != (n, t):
                raise SchemaError(f"outcome matrices must be {n} x {t}")
            object.__setattr__(self, "effects", eff)
            object.__setattr__(self, "costs", cost)
            if not (np.all(np.isfinite(eff)) and np.all(np.isfinite(cost))):
                raise NumericError("PSA outcomes must be finite")
        if n < 2:
            raise FormatError("S ≥ 2 required (S >= 2)")
        if not np.all(np.isfinite(params)):
            raise NumericError("PSA parameters must be finite")

    @property
    def n_samples(self) -> int:
        return self.params.shape[0]

    @property
    def n_strategies(self) -> int:
        return len(self.strategies)

    @property
    def has_outcomes(self) -> bool:
        return self.effects is not None

    def param(self, name: str) -> np.ndarray:
        try:
            return self.params[:, self.parameter_names.index(name)]
        except ValueError:
            raise SchemaError(f"unknown parameter {name!r}") from None

    def param_matrix(self, names: Sequence[str]) -> np.ndarray:
        return np.column_stack([self.param(n) for n in names])

    def outcome_names(self) -> list[str]:
        if not self.has_outcomes:
            return []
        names = []
        for s in self.strategies:
            names += [f"{self.effect_label}.t{s.index}", f"cost.t{s.index}"]
        return names


@dataclass(frozen=True, eq=False)
class NetBenefitMatrix:
    values: np.ndarray
    threshold: WtpThreshold | None = None

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[1] < 2:
            raise ValueError("net benefit must be S x T with T >= 2")
        if not np.all(np.isfinite(v)):
            row = int(np.argwhere(~np.isfinite(v))[0, 0]) + 1
            raise NumericError(f"non-finite net benefit in row {row}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class IncrementalNetBenefitMatrix:
    """``values[s, t] = nb[s, t] - nb[s, reference]``; ``reference`` is 1-based."""

    values: np.ndarray
    reference: int

    def __post_init__(self):
        v = _frozen(self.values)
        object.__setattr__(self, "values", v)
        if not 1 <= self.reference <= v.shape[1]:
            raise ValueError("reference strategy out of range")
        if np.any(v[:, self.reference - 1] != 0.0):
            raise ValueError("reference column must be identically zero")

    @property
    def comparators(self) -> list[int]:
        """0-based column indices of the non-reference strategies."""
        return [t for t in range(self.values.shape[1]) if t != self.reference - 1]


@dataclass(frozen=True, eq=False)
class AugmentedPsaDataset:
    """A PSA dataset plus per-row net benefit and its conditional
    expectation given ``phi_names`` (``eta``, net-benefit scale)."""

    base: PsaDataset
    nmb: np.ndarray
    eta: np.ndarray
    phi_names: tuple[str, ...] = ()
    threshold: WtpThreshold | None = None
    # the EVPPI metamodels, when built in this session (not persisted)
    regression: object | None = field(default=None, repr=False)

    def __post_init__(self):
        nmb, eta = _frozen(self.nmb), _frozen(self.eta)
        shape = (self.base.n_samples, self.base.n_strategies)
        if nmb.shape != shape or eta.shape != shape:
            raise SchemaError(f"nmb and eta must be {shape[0]} x {shape[1]}")
        if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(nmb))):
            raise NumericError("augmented columns must be finite")
        object.__setattr__(self, "nmb", nmb)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "phi_names", tuple(self.phi_names))
        for name in self.phi_names:
            self.base.param(name)

    @property
    def n_samples(self) -> int:
        return self.base.n_samples

    @property
    def n_strategies(self) -> int:
        return self.base.n_strategies

    def eta_incremental(self, reference: int) -> np.ndarray:
        return self.eta - self.eta[:, [reference - 1]]


@dataclass(frozen=True, eq=False)
class DecisionUncertaintyCurves:
    """CEAC, CEAF and expected loss per threshold; arrays are L x T.

    ``ceaf`` holds the 1-based optimal strategy for each threshold.
    """

    thresholds: np.ndarray
    ceac: np.ndarray
    ceaf: np.ndarray
    elc: np.ndarray

    def ceaf_indicator(self) -> np.ndarray:
        ind = np.zeros_like(self.ceac, dtype=int)
        ind[np.arange(len(self.ceaf)), self.ceaf - 1] = 1
        return ind

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "strategy", "ceac", "elc", "ceaf"])
        ind = self.ceaf_indicator()
        for i, lam in enumerate(self.thresholds):
            for t in range(self.ceac.shape[1]):
                w.writerow([repr(float(lam)), t + 1, repr(float(self.ceac[i, t])),
                            repr(float(self.elc[i, t])), int(ind[i, t])])
        return buf.getvalue()


# --------------------------------------------------------------------------- I/O

Source = Union[bytes, str, os.PathLike, BinaryIO]


def _read_bytes(source: Source) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    return source.read()


def _parse_number(text: str, row: int, column: str) -> float:
    t = text.strip()
    if not _NUMBER_RE.match(t):
        raise ParseError(f"row {row}, column {column!r}: not a decimal number: {text!r}", row, column)
    return float(t)


def load_psa_dataset(source: Source, phi_names: Sequence[str] = (), labels=None):
    """Read a PSA CSV.

    Returns an :class:`AugmentedPsaDataset` when the file carries
    ``nmb.t<k>`` and ``enb.t<k>``/``evppi.t<k>`` columns, otherwise a
    :class:`PsaDataset`.  ``row`` numbers in errors count data rows from 1.
    """
    try:
        text = _read_bytes(source).decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise FormatError(f"not UTF-8: {exc}") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or all(not h.strip() for h in header):
        raise FormatError("missing header row")
    header = [h.strip() for h in header]
    dup = sorted({h for h in header if header.count(h) > 1})
    if dup:
        raise SchemaError(f"duplicate column names: {dup}")
    canonical = [re.sub(r"^evppi\.", "enb.", h) for h in header]
    dup = sorted({h for h in canonical if canonical.count(h) > 1})
    if dup:
        raise SchemaError(f"both enb and evppi columns given for {dup}")

    rows = []
    for i, rec in enumerate(reader, start=1):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise FormatError(f"row {i} has {len(rec)} fields, header has {len(header)}")
        rows.append([_parse_number(c, i, header[j]) for j, c in enumerate(rec)])
    if len(rows) < 2:
        raise FormatError("S ≥ 2 required (S >= 2)")
    data = np.array(rows, dtype=float)
    s = data.shape[0]

    groups: dict[str, dict[int, int]] = {}
    param_cols, param_names = [], []
    sim_col = None
    effect_label = None
    for j, name in enumerate(canonical):
        if name == "sim":
            sim_col = j
            continue
        m = _OUTCOME_RE.match(name)
        if m:
            kind = m.group(1)
            if kind in ("qaly", "effect"):
                if effect_label not in (None, kind):
                    raise SchemaError("mixing qaly.t<k> and effect.t<k> columns")
                effect_label = kind
                kind = "effect"
            groups.setdefault(kind, {})[int(m.group(2))] = j
            continue
        param_cols.append(j)
        param_names.append(name)

    if sim_col is not None:
        sim = data[:, sim_col]
        if not np.array_equal(sim, np.arange(1, s + 1)):
            raise FormatError("sim column must run 1..S")

    tsets = {k: sorted(v) for k, v in groups.items()}
    all_t = sorted(set().union(*tsets.values())) if tsets else []
    if not all_t:
        raise SchemaError("no strategy outcome columns found")
    t = len(all_t)
    if all_t != list(range(1, t + 1)):
        raise SchemaError(f"strategy indices must be 1..T, got {all_t}")
    for kind, ts in tsets.items():
        if ts != all_t:
            raise SchemaError(f"{kind} columns cover strategies {ts}, expected {all_t}")
    if ("effect" in groups) != ("cost" in groups):
        raise SchemaError("every strategy needs exactly one effect and one cost column")
    if ("nmb" in groups) != ("enb" in groups):
        raise SchemaError("augmented files need both nmb.t<k> and enb.t<k> columns")

    def block(kind):
        return data[:, [groups[kind][k] for k in all_t]]

    strategies = default_strategies(t, labels)
    has_out = "effect" in groups
    base = PsaDataset(
        tuple(param_names),
        data[:, param_cols] if param_cols else np.zeros((s, 0)),
        strategies,
        block("effect") if has_out else None,
        block("cost") if has_out else None,
        effect_label or "qaly",
    )
    if "nmb" in groups:
        return AugmentedPsaDataset(base, block("nmb"), block("enb"), tuple(phi_names))
    if not has_out:
        raise SchemaError("no effect/cost columns found")
    return base


def _fmt(x: float) -> str:
    return repr(float(x))


def save_psa_dataset(ds: PsaDataset | AugmentedPsaDataset) -> bytes:
    """Render a dataset as CSV bytes (see module docstring for the layout)."""
    aug = ds if isinstance(ds, AugmentedPsaDataset) else None
    base = aug.base if aug else ds
    header = ["sim", *base.parameter_names, *base.outcome_names()]
    cols = [base.params]
    if base.has_outcomes:
        inter = np.empty((base.n_samples, 2 * base.n_strategies))
        inter[:, 0::2] = base.effects
        inter[:, 1::2] = base.costs
        cols.append(inter)
    if aug is not None:
        ts = [s.index for s in base.strategies]
        header += [f"nmb.t{k}" for k in ts] + [f"enb.t{k}" for k in ts]
        cols += [aug.nmb, aug.eta]
    body = np.hstack(cols) if cols else np.zeros((base.n_samples, 0))
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for i, row in enumerate(body, start=1):
        buf.write(",".join([str(i)] + [_fmt(x) for x in row]) + "\n")
    return buf.getvalue().encode("utf-8")


# ----------------------------------------------------------------- net benefit

def compute_net_benefit(ds: PsaDataset, lam) -> NetBenefitMatrix:
    """``lam * effect - cost`` for every row and strategy."""
    lam = as_threshold(lam)
    if not ds.has_outcomes:
        raise SchemaError("dataset has no effect/cost columns")
    with np.errstate(over="ignore", invalid="ignore"):
        nb = lam.value * ds.effects - ds.costs
    if not np.all(np.isfinite(nb)):
        row = int(np.argwhere(~np.isfinite(nb))[0, 0]) + 1
        raise NumericError(f"non-finite net benefit in row {row}")
    return NetBenefitMatrix(nb, lam)


def _nb_values(nb) -> np.ndarray:
    return nb.values if isinstance(nb, NetBenefitMatrix) else np.asarray(nb, dtype=float)


def best_strategy(nb) -> int:
    """1-based index of the highest column mean; ties go to the lowest index."""
    return int(np.argmax(sequential_mean(_nb_values(nb), axis=0))) + 1


def compute_incremental_net_benefit(nb, reference: int | str = "auto") -> IncrementalNetBenefitMatrix:
    """Net benefit relative to ``reference`` (``NB_t - NB_ref``), so the
    best strategy is the one with the largest incremental value."""
    v = _nb_values(nb)
    ref = best_strategy(v) if reference == "auto" else int(reference)
    if not 1 <= ref <= v.shape[1]:
        raise ValueError(f"reference strategy {ref} out of range 1..{v.shape[1]}")
    inb = v - v[:, [ref - 1]]
    inb[:, ref - 1] = 0.0
    return IncrementalNetBenefitMatrix(inb, ref)


def evpi(nb) -> VoiEstimate:
    """Expected value of perfect information from a net benefit matrix."""
    return make_estimate("EVPI", _nb_values(nb), "psa")


def decision_uncertainty_curves(ds: PsaDataset, lambdas: Sequence[float]) -> DecisionUncertaintyCurves:
    """CEAC, CEAF and expected loss curves over a grid of thresholds.

    CEAC ties go to the lowest strategy index.
    """
    lam = np.asarray(list(lambdas), dtype=float)
    if lam.size == 0:
        raise ValueError("at least one threshold is required")
    if np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
        raise ValueError("thresholds must be positive and strictly increasing")
    t = ds.n_strategies
    ceac = np.empty((lam.size, t))
    elc = np.empty((lam.size, t))
    ceaf = np.empty(lam.size, dtype=int)
    s = ds.n_samples
    for i, l in enumerate(lam):
        nb = compute_net_benefit(ds, l).values
        winners = np.argmax(nb, axis=1)
        counts = np.bincount(winners, minlength=t)
        ceac[i] = counts / s
        row_max = nb.max(axis=1)
        elc[i] = sequential_mean(row_max[:, None] - nb, axis=0)
        ceaf[i] = best_strategy(nb)
    return DecisionUncertaintyCurves(lam, ceac, ceaf, elc)
