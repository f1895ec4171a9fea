"""Decision models, proposed study designs and Bayesian updating.

A :class:`DecisionModel` is vectorised: ``evaluate`` receives a mapping
from parameter name to a 1-D array of draws and returns ``(effects,
costs)``, each ``n x T``.

Study data are carried as sufficient statistics.  Simulation draws the
statistics from their exact sampling distributions, which keeps very
large designs cheap; :func:`simulate_future_dataset` can also return the
individual observations (``raw=True``).

Sampling families and what they inform:

===================  ==========================  =====================
family               observation                 linked parameter
===================  ==========================  =====================
binomial             N Bernoulli trials          success probability
normal               N draws, known variance     mean
normal-known-mean    N draws, known mean         variance
poisson              N counts, exposure each     event rate
exponential          N event times               rate
===================  ==========================  =====================

Outcomes are conditionally independent given the parameters and each is
linked to one parameter.  Priors are independent, so the posterior of
each parameter depends only on the outcomes linked to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import special

from . import mcmc
from .distributions import ParameterSpec
from .errors import DataError, DomainError, ModelError, NoConjugateUpdate
from .psa import PsaDataset, Strategy, default_strategies
from .rng import map_rows, stream

SAMPLING_FAMILIES = ("binomial", "normal", "normal-known-mean", "poisson", "exponential")

# (prior family, sampling family) pairs with a closed-form update
CONJUGATE_PAIRS = {
    ("beta", "binomial"),
    ("gamma", "exponential"),
    ("gamma", "poisson"),
    ("normal", "normal"),
    ("invgamma", "normal-known-mean"),
}

SUMMARY_SCALE = {
    "binomial": "proportion of successes",
    "normal": "sample mean",
    "normal-known-mean": "mean squared deviation from the known mean",
    "poisson": "events per unit exposure",
    "exponential": "events per unit time (1 / mean time)",
}

Evaluate = Callable[[Mapping[str, np.ndarray]], "tuple[np.ndarray, np.ndarray]"]


@dataclass(frozen=True)
class DecisionModel:
    name: str
    parameters: tuple[ParameterSpec, ...]
    strategies: tuple[Strategy, ...]
    evaluate: Evaluate = field(repr=False)
    effect_label: str = "qaly"
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        names = self.parameter_names
        if len(set(names)) != len(names):
            raise DataError("duplicate parameter names")

    @property
    def parameter_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    def spec(self, name: str) -> ParameterSpec:
        for p in self.parameters:
            if p.name == name:
                return p
        raise DataError(f"model {self.name!r} has no parameter {name!r}")

    def with_priors(self, priors: Mapping[str, ParameterSpec]) -> "DecisionModel":
        for name in priors:
            self.spec(name)
        params = tuple(priors.get(p.name, p) for p in self.parameters)
        return replace(self, parameters=params)

    def outcomes(self, values: Mapping[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate and check shapes and finiteness."""
        n = len(np.atleast_1d(next(iter(values.values()))))
        eff, cost = self.evaluate(values)
        eff = np.asarray(eff, dtype=float).reshape(n, -1)
        cost = np.asarray(cost, dtype=float).reshape(n, -1)
        t = len(self.strategies)
        if eff.shape[1] != t or cost.shape[1] != t:
            raise ModelError(f"model returned {eff.shape[1]} strategies, expected {t}")
        bad = ~(np.all(np.isfinite(eff), axis=1) & np.all(np.isfinite(cost), axis=1))
        if bad.any():
            i = int(np.argmax(bad))
            draw = {k: float(np.atleast_1d(v)[i]) for k, v in values.items()}
            raise ModelError(f"model produced non-finite output at draw {i + 1}: {draw}")
        return eff, cost

    def net_benefit(self, values: Mapping[str, np.ndarray], lam: float) -> np.ndarray:
        eff, cost = self.outcomes(values)
        return lam * eff - cost


def run_psa(model: DecisionModel, n_samples: int, seed: int, threads: int | None = None) -> PsaDataset:
    """Draw ``n_samples`` rows from the priors and evaluate the model.

    Row ``s`` uses its own stream ``(seed, "psa", s)``.
    """
    if n_samples < 2:
        raise DataError("S ≥ 2 required (S >= 2)")
    specs = model.parameters

    def draw(row):
        rng = stream(seed, "psa", row)
        return [p.sample(rng) for p in specs]

    params = np.array(map_rows(draw, n_samples, threads), dtype=float).reshape(n_samples, len(specs))
    values = {p.name: params[:, j] for j, p in enumerate(specs)}
    eff, cost = model.outcomes(values)
    return PsaDataset(model.parameter_names, params, model.strategies, eff, cost, model.effect_label)


# ------------------------------------------------------------------ designs

@dataclass(frozen=True)
class Outcome:
    """One measured outcome of a proposed study."""

    name: str
    family: str
    param: str
    variance: float | None = None
    mean: float | None = None
    exposure: float = 1.0

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if fam not in SAMPLING_FAMILIES:
            raise DataError(f"outcome {self.name}: unknown sampling family {self.family!r}")
        if fam == "normal" and not (self.variance and self.variance > 0):
            raise DataError(f"outcome {self.name}: normal outcomes need a known variance > 0")
        if fam == "normal-known-mean" and self.mean is None:
            raise DataError(f"outcome {self.name}: normal-known-mean outcomes need the known mean")
        if fam == "poisson" and not self.exposure > 0:
            raise DataError(f"outcome {self.name}: exposure must be > 0")

    def check_support(self, phi) -> None:
        phi = np.asarray(phi, dtype=float)
        ok = _in_outcome_support(self, phi)
        if not np.all(ok):
            bad = phi[~ok].ravel()[0]
            raise DomainError(f"outcome {self.name}: {self.param} = {bad} outside the {self.family} support")


@dataclass(frozen=True)
class StudyDesign:
    """Parameters the study informs, its outcomes and the sample size N
    (participants per outcome, i.e. per arm for multi-arm designs)."""

    phi_names: tuple[str, ...]
    outcomes: tuple[Outcome, ...]
    sample_size: int

    def __post_init__(self):
        object.__setattr__(self, "phi_names", tuple(self.phi_names))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        if not self.phi_names:
            raise DataError("a design must name at least one parameter")
        if len(set(self.phi_names)) != len(self.phi_names):
            raise DataError("duplicate parameters in design")
        if int(self.sample_size) != self.sample_size or self.sample_size < 0:
            raise DataError("sample size must be a non-negative integer")
        object.__setattr__(self, "sample_size", int(self.sample_size))
        names = [o.name for o in self.outcomes]
        if len(set(names)) != len(names):
            raise DataError("duplicate outcome names")
        for o in self.outcomes:
            if o.param not in self.phi_names:
                raise DataError(f"outcome {o.name} links to {o.param!r}, which is not in the design")

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    def with_sample_size(self, n: int) -> "StudyDesign":
        return replace(self, sample_size=int(n))

    def outcomes_for(self, param: str) -> list[int]:
        return [i for i, o in enumerate(self.outcomes) if o.param == param]

    def check_model(self, model_or_names) -> None:
        names = getattr(model_or_names, "parameter_names", model_or_names)
        missing = [p for p in self.phi_names if p not in names]
        if missing:
            raise DataError(f"design parameters not in the model: {missing}")


@dataclass(frozen=True, eq=False)
class OutcomeData:
    """Observations of one outcome: sample size, sufficient statistics and,
    when simulated with ``raw=True``, the individual values."""

    outcome: Outcome
    n: int
    stats: Mapping[str, float]
    values: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class FutureDataset:
    design: StudyDesign
    phi: Mapping[str, float]
    data: tuple[OutcomeData, ...]


@dataclass(frozen=True)
class SummaryStatistic:
    values: tuple[float, ...]
    names: tuple[str, ...]
    scales: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class DataBatch:
    """Sufficient statistics for many simulated datasets (one per row)."""

    design: StudyDesign
    n: int
    stats: tuple[Mapping[str, np.ndarray], ...]

    def __len__(self):
        first = next(iter(self.stats[0].values())) if self.stats else ()
        return len(first)

    def row(self, s: int) -> tuple[Mapping[str, float], ...]:
        return tuple({k: float(v[s]) for k, v in st.items()} for st in self.stats)


def stats_from_values(outcome: Outcome, values) -> dict:
    v = np.asarray(values, dtype=float)
    fam = outcome.family
    if fam == "binomial":
        if np.any((v != 0) & (v != 1)):
            raise DomainError(f"outcome {outcome.name}: binomial observations must be 0/1")
        return {"k": float(v.sum())}
    if fam == "normal":
        return {"sum": float(v.sum()), "sumsq": float(np.dot(v, v))}
    if fam == "normal-known-mean":
        d = v - outcome.mean
        return {"ss": float(np.dot(d, d))}
    if fam == "poisson":
        if np.any((v < 0) | (v != np.round(v))):
            raise DomainError(f"outcome {outcome.name}: poisson observations must be counts")
        return {"events": float(v.sum())}
    if np.any(v <= 0):
        raise DomainError(f"outcome {outcome.name}: exponential times must be > 0")
    return {"total": float(v.sum())}


def _draw_stats(outcome: Outcome, n: int, phi: float, rng: np.random.Generator) -> dict:
    fam = outcome.family
    if n == 0:
        return {"binomial": {"k": 0.0}, "normal": {"sum": 0.0, "sumsq": 0.0},
                "normal-known-mean": {"ss": 0.0}, "poisson": {"events": 0.0},
                "exponential": {"total": 0.0}}[fam]
    if fam == "binomial":
        return {"k": float(rng.binomial(n, phi))}
    if fam == "normal":
        sd = math.sqrt(outcome.variance)
        xbar = rng.normal(phi, sd / math.sqrt(n))
        within = outcome.variance * rng.chisquare(n - 1) if n > 1 else 0.0
        return {"sum": n * xbar, "sumsq": within + n * xbar * xbar}
    if fam == "normal-known-mean":
        return {"ss": phi * rng.chisquare(n)}
    if fam == "poisson":
        return {"events": float(rng.poisson(phi * outcome.exposure * n))}
    return {"total": float(rng.gamma(n, 1.0 / phi))}


def _draw_values(outcome: Outcome, n: int, phi: float, rng: np.random.Generator) -> np.ndarray:
    fam = outcome.family
    if fam == "binomial":
        return (rng.random(n) < phi).astype(float)
    if fam == "normal":
        return rng.normal(phi, math.sqrt(outcome.variance), n)
    if fam == "normal-known-mean":
        return rng.normal(outcome.mean, math.sqrt(phi), n)
    if fam == "poisson":
        return rng.poisson(phi * outcome.exposure, n).astype(float)
    return rng.exponential(1.0 / phi, n)


def _phi_values(design: StudyDesign, phi) -> dict:
    if not isinstance(phi, Mapping):
        vals = np.atleast_1d(np.asarray(phi, dtype=float))
        if vals.size != len(design.phi_names):
            raise DataError(f"expected {len(design.phi_names)} parameter values, got {vals.size}")
        phi = dict(zip(design.phi_names, vals))
    missing = [p for p in design.phi_names if p not in phi]
    if missing:
        raise DataError(f"missing values for {missing}")
    return {p: phi[p] for p in design.phi_names}


def simulate_future_dataset(design: StudyDesign, phi, seed: int, raw: bool = False) -> FutureDataset:
    """One simulated study at parameter values ``phi``."""
    phi = {k: float(v) for k, v in _phi_values(design, phi).items()}
    rng = stream(seed, "future-dataset")
    n = design.sample_size
    data = []
    for o in design.outcomes:
        o.check_support(phi[o.param])
        if raw:
            vals = _draw_values(o, n, phi[o.param], rng)
            data.append(OutcomeData(o, n, stats_from_values(o, vals), vals))
        else:
            data.append(OutcomeData(o, n, _draw_stats(o, n, phi[o.param], rng)))
    return FutureDataset(design, phi, tuple(data))


def simulate_batch(design: StudyDesign, phi: Mapping[str, np.ndarray], seed: int, purpose: str,
                   n: int | None = None, threads: int | None = None) -> DataBatch:
    """One dataset per row of ``phi``; row ``s`` uses stream ``(seed, purpose, s)``."""
    n = design.sample_size if n is None else int(n)
    phi = {k: np.asarray(v, dtype=float) for k, v in _phi_values(design, phi).items()}
    rows = len(next(iter(phi.values())))
    for o in design.outcomes:
        o.check_support(phi[o.param])
    outs = design.outcomes

    def draw(s):
        rng = stream(seed, purpose, s)
        return [_draw_stats(o, n, phi[o.param][s], rng) for o in outs]

    per_row = map_rows(draw, rows, threads)
    stats = []
    for j, o in enumerate(outs):
        keys = per_row[0][j].keys() if rows else ()
        stats.append({k: np.array([r[j][k] for r in per_row]) for k in keys})
    return DataBatch(design, n, tuple(stats))


# --------------------------------------------------------- summaries, likelihood

def _summary(outcome: Outcome, n: int, st: Mapping[str, np.ndarray]):
    fam = outcome.family
    if fam == "binomial":
        return st["k"] / n
    if fam == "normal":
        return st["sum"] / n
    if fam == "normal-known-mean":
        return st["ss"] / n
    if fam == "poisson":
        return st["events"] / (n * outcome.exposure)
    return n / st["total"]


def summarize_dataset(design: StudyDesign, x: FutureDataset) -> SummaryStatistic:
    """Per-outcome summary on the scale of the linked parameter."""
    if x.design.outcomes != design.outcomes:
        raise DataError("dataset does not conform to the design")
    vals = []
    for d in x.data:
        if d.n == 0:
            raise DataError(f"outcome {d.outcome.name}: empty dataset has no summary")
        vals.append(float(_summary(d.outcome, d.n, d.stats)))
    return SummaryStatistic(tuple(vals), tuple(o.name for o in design.outcomes),
                            tuple(SUMMARY_SCALE[o.family] for o in design.outcomes))


def summarize_batch(batch: DataBatch) -> np.ndarray:
    """S x N_O matrix of summaries."""
    if batch.n == 0:
        raise DataError("empty datasets have no summary")
    return np.column_stack([_summary(o, batch.n, st) for o, st in zip(batch.design.outcomes, batch.stats)])


def _outcome_loglik(outcome: Outcome, n: int, st: Mapping[str, float], phi):
    phi = np.asarray(phi, dtype=float)
    fam = outcome.family
    if n == 0:
        return np.zeros_like(phi)
    if fam == "binomial":
        k = st["k"]
        const = special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)
        return const + special.xlogy(k, phi) + special.xlog1py(n - k, -phi)
    if fam == "normal":
        v = outcome.variance
        quad = st["sumsq"] - 2.0 * phi * st["sum"] + n * phi * phi
        return -0.5 * n * math.log(2 * math.pi * v) - quad / (2 * v)
    if fam == "normal-known-mean":
        return -0.5 * n * np.log(2 * math.pi * phi) - st["ss"] / (2 * phi)
    if fam == "poisson":
        mu = phi * outcome.exposure * n
        k = st["events"]
        return special.xlogy(k, mu) - mu - special.gammaln(k + 1)
    return n * np.log(phi) - phi * st["total"]


def log_likelihood(design: StudyDesign, x: FutureDataset, phi) -> float | np.ndarray:
    """Log likelihood of ``x`` at ``phi`` (scalars, or arrays to evaluate
    many parameter values at once).

    Binomial and Poisson outcomes use the likelihood of the total count
    (with its combinatorial constant); continuous outcomes use the joint
    density of the observations.  Zero likelihood gives ``-inf``.
    """
    if len(x.data) != design.n_outcomes:
        raise DataError(f"dataset has {len(x.data)} outcomes, design has {design.n_outcomes}")
    phi = _phi_values(design, phi)
    return _loglik_stats(design, x.data[0].n if x.data else 0, [d.stats for d in x.data], phi)


def _loglik_stats(design, n, stats, phi):
    total = 0.0
    for o, st in zip(design.outcomes, stats):
        o.check_support(phi[o.param])
        with np.errstate(divide="ignore"):
            total = total + _outcome_loglik(o, n, st, phi[o.param])
    return total


# ------------------------------------------------------------- conjugacy

def has_conjugate_update(prior: ParameterSpec, design: StudyDesign) -> bool:
    return all((prior.family, design.outcomes[i].family) in CONJUGATE_PAIRS
               for i in design.outcomes_for(prior.name))


def _conjugate_hyper(prior: ParameterSpec, design: StudyDesign, n: int, stats):
    """Posterior hyperparameters; ``stats`` entries may be arrays."""
    a, b = prior.a, prior.b
    for i in design.outcomes_for(prior.name):
        o, st = design.outcomes[i], stats[i]
        pair = (prior.family, o.family)
        if pair not in CONJUGATE_PAIRS:
            raise NoConjugateUpdate(f"no conjugate update for a {prior.family} prior with {o.family} data")
        if n == 0:
            continue
        if pair == ("beta", "binomial"):
            a, b = a + st["k"], b + (n - st["k"])
        elif pair == ("gamma", "exponential"):
            a, b = a + n, b + st["total"]
        elif pair == ("gamma", "poisson"):
            a, b = a + st["events"], b + n * o.exposure
        elif pair == ("normal", "normal"):
            prec = 1.0 / b + n / o.variance
            a = (a / b + st["sum"] / o.variance) / prec
            b = 1.0 / prec
        else:
            a, b = a + n / 2.0, b + st["ss"] / 2.0
    return a, b


def conjugate_update(prior: ParameterSpec, design: StudyDesign, x: FutureDataset) -> ParameterSpec:
    """Closed-form posterior for ``prior`` given the outcomes linked to it.

    Raises :class:`NoConjugateUpdate` for unsupported pairs.
    """
    n = x.data[0].n if x.data else 0
    a, b = _conjugate_hyper(prior, design, n, [d.stats for d in x.data])
    return ParameterSpec(prior.name, prior.family, float(a), float(b))


def _posterior_mean_from_hyper(family, a, b):
    if family == "beta":
        return a / (a + b)
    if family == "gamma":
        return a / b
    if family == "normal":
        return a
    return b / (a - 1)


def posterior_means_batch(prior: ParameterSpec, batch: DataBatch) -> np.ndarray:
    """Conjugate posterior mean of ``prior`` for every row of ``batch``."""
    a, b = _conjugate_hyper(prior, batch.design, batch.n, batch.stats)
    return np.broadcast_to(_posterior_mean_from_hyper(prior.family, a, b), (len(batch),)).astype(float)


def sample_posterior(prior: ParameterSpec, design: StudyDesign, n: int, stats, size: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Draws from the posterior of one parameter.

    Conjugate pairs are sampled exactly; anything else falls back to
    random-walk Metropolis on the unconstrained scale.
    """
    linked = design.outcomes_for(prior.name)
    if not linked or n == 0:
        return np.asarray(prior.sample(rng, size), dtype=float)
    if has_conjugate_update(prior, design):
        a, b = _conjugate_hyper(prior, design, n, stats)
        return np.asarray(ParameterSpec(prior.name, prior.family, float(a), float(b)).sample(rng, size))
    return metropolis_posterior(prior, design, n, stats, size, rng)


def metropolis_posterior(prior: ParameterSpec, design: StudyDesign, n: int, stats, size: int,
                         rng: np.random.Generator) -> np.ndarray:
    """``size`` Metropolis draws from the posterior of ``prior`` given one
    dataset's statistics."""
    rows = [{k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in st.items()} for st in stats]
    return metropolis_posterior_batch(prior, design, n, rows, size, rng)[:, 0]


def metropolis_posterior_batch(prior: ParameterSpec, design: StudyDesign, n: int, stats, size: int,
                               rng: np.random.Generator) -> np.ndarray:
    """Posterior draws for C datasets at once, ``size x C``.

    ``stats`` holds one mapping per outcome whose entries are length-C
    arrays, as in :class:`DataBatch`.  Each dataset gets its own chain.
    """
    linked = design.outcomes_for(prior.name)
    outs = [(design.outcomes[i], stats[i]) for i in linked]
    c = len(next(iter(outs[0][1].values()))) if outs else 1

    def log_target(z):
        x = prior.from_unconstrained(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = prior.logpdf(x) + prior.log_jacobian(z)
            for o, st in outs:
                ll = _outcome_loglik(o, n, st, np.where(prior.in_support(x), x, prior.mean))
                lp = lp + np.where(_in_outcome_support(o, x), ll, -np.inf)
        return np.where(np.isfinite(lp), lp, -np.inf)

    # start each chain at the best of a few prior draws
    starts = prior.to_unconstrained(prior.sample(rng, (64, c)))
    dens = np.array([log_target(row) for row in starts])
    z0 = starts[np.argmax(dens, axis=0), np.arange(c)]
    scale = float(np.std(starts)) / math.sqrt(1.0 + n)
    chain = mcmc.random_walk_metropolis(log_target, z0, size, rng, step=2.4 * max(scale, 1e-6))
    return np.asarray(prior.from_unconstrained(chain.draws), dtype=float)


def _in_outcome_support(outcome: Outcome, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    fam = outcome.family
    if fam == "binomial":
        return (phi >= 0) & (phi <= 1)
    if fam == "normal":
        return np.isfinite(phi)
    if fam == "poisson":
        return phi >= 0
    return phi > 0
