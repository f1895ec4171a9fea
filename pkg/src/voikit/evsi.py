"""Expected value of sample information.

Every method produces a matrix of posterior-mean incremental net benefits
``mu[s, t]`` (reference column pinned at 0) and hands it to the shared
estimator ``mean_s max_t mu - max_t mean_s mu``.

``evsi_rb``
    Regress INB on a summary of a dataset simulated for every PSA row.
``evsi_is``
    Importance-weight the conditional expectations ``eta`` by the
    likelihood of each simulated dataset.
``evsi_ga``
    Shrink the parameters of interest toward their mean according to the
    prior effective sample size and re-predict from the EVPPI metamodels.
``evsi_mm``
    Rescale ``eta`` so its variance matches the expected reduction in
    net benefit variance, estimated from a few re-runs of the model.
``evsi_oracle``
    Two-level Monte Carlo with exact (or Metropolis) posteriors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DataError, DegeneracyError, DimensionError
from .estimate import VoiEstimate, expected_max_gain
from .evppi import BOOTSTRAP_REPS, evppi_with_regression, fit_inb_regression
from .metamodel import MAX_COVARIATES, predict
from .model import (DecisionModel, StudyDesign, _draw_stats, _loglik_stats, sample_posterior,
                    simulate_batch, summarize_batch)
from .psa import (AugmentedPsaDataset, PsaDataset, as_threshold, best_strategy,
                  compute_incremental_net_benefit, compute_net_benefit)
from .rng import map_rows, sequential_mean, stream

MM_Q_DEFAULT = 31
MM_MIN_N = 10
MM_EVPPI_RATIO = 0.4
IS_ESS_FRACTION = 0.01
IS_BOOTSTRAP_MAX_S = 6000  # the IS bootstrap holds an S x S weight matrix


@dataclass(frozen=True, eq=False)
class PosteriorMeanMatrix:
    """``values[s, t]``: posterior mean INB of strategy t given dataset s."""

    values: np.ndarray
    reference: int = 1

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] < 2:
            raise DataError("posterior means must be S x T with T >= 2")
        if not np.all(np.isfinite(v)):
            raise DataError("posterior means must be finite")
        if not 1 <= self.reference <= v.shape[1]:
            raise DataError("reference strategy out of range")
        if np.any(v[:, self.reference - 1] != 0.0):
            raise DataError("reference column must be identically zero")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class MmVarianceLedger:
    """Working quantities of the moment-matching method, per comparator."""

    phi_q: np.ndarray  # Q x P quantile points
    sigma2_q: np.ndarray  # Q x T posterior INB variances (reference column 0)
    prior_variance: np.ndarray  # T
    target_raw: np.ndarray  # T, before clamping
    target: np.ndarray  # T

    def __post_init__(self):
        q = self.phi_q.shape[0]
        if not 30 < q < 50:
            raise DataError(f"Q must satisfy 30 < Q < 50, got {q}")
        if np.any(self.target < 0):
            raise ValueError("target variances must be clamped at 0")

    def to_dict(self) -> dict:
        return {
            "Q": int(self.phi_q.shape[0]),
            "phi_q": self.phi_q.tolist(),
            "sigma2_q": self.sigma2_q.tolist(),
            "prior_variance": self.prior_variance.tolist(),
            "target_raw": self.target_raw.tolist(),
            "target": self.target.tolist(),
        }


def evsi_from_posterior_means(mu: PosteriorMeanMatrix | np.ndarray, method: str = "",
                              design_N: int | None = None, **diagnostics) -> VoiEstimate:
    if not isinstance(mu, PosteriorMeanMatrix):
        mu = PosteriorMeanMatrix(mu, 1)
    value, raw, se = expected_max_gain(mu.values)
    diagnostics["raw_value"] = raw
    return VoiEstimate("EVSI", value, se, method, design_N, diagnostics)


def _prior_inb(ds: PsaDataset, lam, reference="auto"):
    nb = compute_net_benefit(ds, as_threshold(lam))
    return compute_incremental_net_benefit(nb, reference)


def _phi_arrays(ds: PsaDataset, design: StudyDesign) -> dict:
    return {p: ds.param(p) for p in design.phi_names}


# ------------------------------------------------------------------ RB

Summarizer = Callable[[object], np.ndarray]


def evsi_rb(ds: PsaDataset, design: StudyDesign, lam, seed: int, n_knots: int = 10,
            summarizer: Summarizer | None = None, threads: int | None = None,
            reference: int | str = "auto", bootstrap: int = BOOTSTRAP_REPS) -> VoiEstimate:
    """Regression on simulated data summaries.

    ``summarizer`` maps a :class:`DataBatch` to an S x k matrix; the
    default is the per-outcome summary on the parameter scale.  ``mc_se``
    is a bootstrap over rows refitting the metamodel coefficients.
    """
    if design.n_outcomes > MAX_COVARIATES:
        raise DimensionError(
            f"{design.n_outcomes} study outcomes: regression-based EVSI is limited to "
            f"{MAX_COVARIATES} summaries because flexible regression struggles beyond five or six "
            "covariates; use the importance-sampling or moment-matching method instead")
    if design.sample_size == 0:
        raise DataError("regression-based EVSI needs N >= 1")
    inc = _prior_inb(ds, lam, reference)
    batch = simulate_batch(design, _phi_arrays(ds, design), seed, "rb-data", threads=threads)
    w = summarizer(batch) if summarizer else summarize_batch(batch)
    w = np.asarray(w, dtype=float).reshape(ds.n_samples, -1)
    names = [o.name for o in design.outcomes] if w.shape[1] == design.n_outcomes else None
    reg = fit_inb_regression(inc.values, w, names or [f"w{j + 1}" for j in range(w.shape[1])],
                             inc.reference, n_knots, what="EVSI (RB)")
    mu = PosteriorMeanMatrix(reg.fitted, inc.reference)
    est = evsi_from_posterior_means(mu, "rb", design.sample_size, reference=inc.reference,
                                    status=reg.worst_status(), metamodels=reg.diagnostics())
    return _with_bootstrap(est, reg.fitted_bootstrap_se(seed, "rb-bootstrap", bootstrap)
                           if bootstrap > 1 else None)


def _with_bootstrap(est: VoiEstimate, se: float | None) -> VoiEstimate:
    if se is None:
        return est
    diag = dict(est.diagnostics)
    diag["row_se"] = est.mc_se
    return replace(est, mc_se=max(se, est.mc_se or 0.0), diagnostics=diag)


# ------------------------------------------------------------------ IS

def importance_weights(log_lik: np.ndarray) -> np.ndarray:
    """Self-normalised weights from log likelihoods via log-sum-exp."""
    ll = np.asarray(log_lik, dtype=float)
    top = np.max(ll)
    if not np.isfinite(top):
        raise DegeneracyError("every importance weight is zero")
    w = np.exp(ll - top)
    w /= w.sum()
    return w / w.sum()


def evsi_is(aug: AugmentedPsaDataset, design: StudyDesign, lam=None, seed: int = 0,
            threads: int | None = None, reference: int | str = "auto",
            bootstrap: int = BOOTSTRAP_REPS) -> VoiEstimate:
    """Importance sampling over the PSA rows.

    ``lam`` is only checked against the threshold baked into ``aug``.
    When ``aug`` still carries its EVPPI metamodels and S is at most
    ``IS_BOOTSTRAP_MAX_S``, ``mc_se`` is a bootstrap that resamples PSA
    rows, refits the metamodels and re-normalises the weights over the
    resampled rows; otherwise it is the row-wise SE.
    """
    missing = [p for p in design.phi_names if p not in aug.phi_names]
    if missing:
        raise DataError(f"augmented dataset was not built for {missing}")
    if lam is not None and aug.threshold is not None and float(as_threshold(lam).value) != aug.threshold.value:
        raise DataError("threshold differs from the one used to build the augmented dataset")
    ref = best_strategy(aug.nmb) if reference == "auto" else int(reference)
    eta = aug.eta_incremental(ref)
    eta[:, ref - 1] = 0.0
    phi = _phi_arrays(aug.base, design)
    batch = simulate_batch(design, phi, seed, "is-data", threads=threads)
    n = design.sample_size
    reg = aug.regression if bootstrap > 1 else None
    keep = reg is not None and aug.n_samples <= IS_BOOTSTRAP_MAX_S

    def row(s):
        ll = _loglik_stats(design, n, batch.row(s), phi)
        try:
            w = importance_weights(ll)
        except DegeneracyError:
            raise DegeneracyError(f"all likelihood weights underflow for dataset {s + 1} at N = {n}") from None
        return w @ eta, 1.0 / float(w @ w), (w.astype(np.float32) if keep else None)

    out = map_rows(row, aug.n_samples, threads)
    mu = np.array([o[0] for o in out])
    mu[:, ref - 1] = 0.0
    ess = np.array([o[1] for o in out])
    med = float(np.median(ess))
    diag = {"reference": ref, "ess_median": med, "ess_min": float(ess.min())}
    if med < IS_ESS_FRACTION * aug.n_samples:
        msg = (f"median importance-sampling ESS {med:.1f} is below {IS_ESS_FRACTION:.0%} of S; "
               f"the likelihood is too concentrated at N = {n} for reliable weights")
        warnings.warn(msg, stacklevel=2)
        diag["warning"] = msg
    est = evsi_from_posterior_means(PosteriorMeanMatrix(mu, ref), "is", n, **diag)
    if reg is None:
        return est
    if not keep:
        diag_note = dict(est.diagnostics)
        diag_note["se_note"] = f"S > {IS_BOOTSTRAP_MAX_S}: row-wise SE only"
        return replace(est, diagnostics=diag_note)
    weights = np.array([o[2] for o in out])  # S x S, row s = weights for dataset s
    basis = reg.training_design()

    def build(idx, coefs):
        # resampling PSA rows also changes the support of every weight vector
        counts = np.bincount(idx, minlength=len(weights)).astype(np.float32)
        den = (weights @ counts)[idx]
        res = np.zeros((len(idx), aug.n_strategies))
        for t, (a, beta) in coefs.items():
            eta_b = (a + basis @ beta) * counts
            res[:, t] = (weights @ eta_b.astype(np.float32))[idx] / den
        return res - res[:, [ref - 1]]

    return _with_bootstrap(est, reg.bootstrap_se(seed, "is-bootstrap", build, bootstrap))


def _refit_builder(rows: np.ndarray, ref: int, n_strategies: int, transform=None):
    """Replicate builder: refitted conditional means at basis ``rows``,
    re-referenced to ``ref`` and optionally transformed."""

    def build(idx, coefs):
        out = np.zeros((len(idx), n_strategies))
        r = rows[idx]
        for t, (a, beta) in coefs.items():
            out[:, t] = a + r @ beta
        out -= out[:, [ref - 1]]
        return transform(out) if transform else out

    return build


# ------------------------------------------------------------------ GA

def ga_rescale(phi: np.ndarray, n0: float, n: float, scaling: str = "sqrt") -> np.ndarray:
    """Shrink simulations of one parameter toward their mean.

    With ``w = N / (N + n0)``, ``scaling="linear"`` returns
    ``w * phi + (1 - w) * mean``.  The default ``"sqrt"`` uses ``sqrt(w)``
    in place of ``w`` so the shrunken values have variance ``w Var(phi)``,
    the variance of the posterior mean under a normal approximation.
    """
    if not n0 > 0:
        raise DataError(f"prior effective sample size must be > 0, got {n0}")
    if scaling not in ("sqrt", "linear"):
        raise DataError(f"unknown GA scaling {scaling!r}")
    phi = np.asarray(phi, dtype=float)
    w = n / (n + n0)
    c = math.sqrt(w) if scaling == "sqrt" else w
    bar = float(sequential_mean(phi))
    return c * phi + (1.0 - c) * bar


def _n0_value(ess, name):
    v = ess[name] if isinstance(ess, Mapping) else ess
    return float(getattr(v, "n0", v))


def evsi_ga(ds: PsaDataset, design: StudyDesign, ess, lam, n_list: Sequence[int], n_knots: int = 10,
            scaling: str = "sqrt", reference: int | str = "auto", seed: int = 0,
            bootstrap: int = BOOTSTRAP_REPS) -> list[VoiEstimate]:
    """Gaussian approximation for each N in ``n_list``.

    ``ess`` maps each parameter of interest to its prior effective sample
    size (a number or an ``EssEstimate``); a bare number is used for all.
    The metamodels are fitted once and reused for every N.  The point
    estimate is deterministic; ``seed`` only drives the bootstrap SE.
    """
    if isinstance(ess, Mapping):
        missing = [p for p in design.phi_names if p not in ess]
        if missing:
            raise DataError(f"no prior effective sample size for {missing}")
    n0 = {p: _n0_value(ess, p) for p in design.phi_names}
    for p, v in n0.items():
        if not v > 0:
            raise DataError(f"prior effective sample size for {p} must be > 0, got {v}")
    if not len(n_list):
        raise DataError("at least one sample size is required")
    evppi_est, _, reg = evppi_with_regression(ds, design.phi_names, lam, n_knots=n_knots,
                                              reference=reference, bootstrap=0)
    phi = ds.param_matrix(design.phi_names)
    out = []
    for n in n_list:
        if n < 0:
            raise DataError("sample sizes must be >= 0")
        tilde = np.column_stack([ga_rescale(phi[:, j], n0[p], n, scaling)
                                 for j, p in enumerate(design.phi_names)])
        mu = np.zeros_like(reg.fitted)
        for t, m in reg.models.items():
            mu[:, t] = predict(m, tilde)
        est = evsi_from_posterior_means(
            PosteriorMeanMatrix(mu, reg.reference), "ga", int(n), reference=reg.reference, n0=n0,
            scaling=scaling, evppi=evppi_est.value, status=reg.worst_status())
        if bootstrap > 1:
            def build(idx, coefs, n=n):
                # a replicate shrinks toward its own mean, as a fresh PSA would
                sub = phi[idx]
                rows = reg.predict_design(np.column_stack(
                    [ga_rescale(sub[:, j], n0[p], n, scaling) for j, p in enumerate(design.phi_names)]))
                return _refit_builder(rows, reg.reference, ds.n_strategies)(np.arange(len(idx)), coefs)

            est = _with_bootstrap(est, reg.bootstrap_se(seed, "ga-bootstrap", build, bootstrap))
        out.append(est)
    return out


# ------------------------------------------------------------------ MM

def _posterior_values(model: DecisionModel, design: StudyDesign, n: int, stats, size: int,
                      rng: np.random.Generator, update: bool = True) -> dict:
    """Parameter draws: posterior for the design's parameters, prior otherwise."""
    values = {}
    for p in model.parameters:
        if update and p.name in design.phi_names:
            values[p.name] = sample_posterior(p, design, n, stats, size, rng)
        else:
            values[p.name] = np.asarray(p.sample(rng, size), dtype=float)
    return values


def mm_rescale(eta: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Rescale each column about its mean so its variance equals ``target``."""
    eta = np.asarray(eta, dtype=float)
    out = eta.copy()
    for t in range(eta.shape[1]):
        col = eta[:, t]
        bar = float(sequential_mean(col))
        var = float(np.var(col, ddof=1))
        if var == 0.0:
            if target[t] > 0:
                raise DegeneracyError(
                    f"strategy {t + 1}: conditional expectations are constant but the target variance "
                    "is positive; the EVPPI is degenerate")
            continue
        dev = col - bar
        # centre the deviations exactly so the column mean is preserved
        dev -= sequential_mean(dev)
        out[:, t] = bar + dev * math.sqrt(target[t] / var)
    return out


def _mm_quantile_points(aug: AugmentedPsaDataset, design: StudyDesign, eta_inc: np.ndarray,
                        comparators: list[int], q: int) -> tuple[np.ndarray, str]:
    levels = (np.arange(1, q + 1) - 0.5) / q
    phi = aug.base.param_matrix(design.phi_names)
    if phi.shape[1] == 1:
        return np.quantile(phi[:, 0], levels)[:, None], "phi"
    var = [float(np.var(eta_inc[:, t])) for t in comparators]
    t_star = comparators[int(np.argmax(var))]
    order = np.argsort(eta_inc[:, t_star], kind="stable")
    idx = np.minimum((levels * len(order)).astype(int), len(order) - 1)
    return phi[order[idx]], f"eta.t{t_star + 1}"


def evsi_mm(model: DecisionModel, aug: AugmentedPsaDataset, design: StudyDesign, lam=None,
            Q: int = MM_Q_DEFAULT, seed: int = 0, threads: int | None = None,
            prior_variance: str = "rerun", reference: int | str = "auto",
            bootstrap: int = BOOTSTRAP_REPS) -> VoiEstimate:
    """Moment matching.

    For each of ``Q`` quantile points of the parameters of interest, one
    study is simulated, the parameters are updated and the PSA is re-run
    with the same S.  ``prior_variance="rerun"`` (default) compares each
    posterior re-run with a prior re-run driven by the same random
    numbers, which removes most Monte Carlo noise from the difference of
    variances; ``"psa"`` uses the variance of the original PSA.  When
    ``aug`` carries its EVPPI metamodels, ``mc_se`` is a bootstrap that
    refits them with the target variances held fixed.
    """
    if not 30 < Q < 50:
        raise DataError(f"Q must satisfy 30 < Q < 50, got {Q}")
    if prior_variance not in ("rerun", "psa"):
        raise DataError(f"unknown prior_variance option {prior_variance!r}")
    design.check_model(model)
    missing = [p for p in design.phi_names if p not in aug.phi_names]
    if missing:
        raise DataError(f"augmented dataset was not built for {missing}")
    lam = as_threshold(lam if lam is not None else aug.threshold)
    n = design.sample_size
    warn = []
    if n < MM_MIN_N:
        warn.append(f"moment matching is unreliable for studies with fewer than {MM_MIN_N} participants (N = {n})")

    ref = best_strategy(aug.nmb) if reference == "auto" else int(reference)
    comparators = [t for t in range(aug.n_strategies) if t != ref - 1]
    eta = aug.eta_incremental(ref)
    eta[:, ref - 1] = 0.0
    inb = aug.nmb - aug.nmb[:, [ref - 1]]
    evppi_val = expected_max_gain(eta)[0]
    evpi_val = expected_max_gain(inb)[0]
    if evpi_val > 0 and evppi_val / evpi_val < MM_EVPPI_RATIO:
        warn.append(f"EVPPI is {evppi_val / evpi_val:.0%} of EVPI; moment matching prefers at least "
                    f"{MM_EVPPI_RATIO:.0%}")

    phi_q, basis = _mm_quantile_points(aug, design, eta, comparators, Q)
    s = aug.n_samples

    def run(q):
        point = dict(zip(design.phi_names, phi_q[q]))
        rng = stream(seed, "mm-data", q)
        stats = [_draw_stats(o, n, point[o.param], rng) for o in design.outcomes]
        post = _posterior_values(model, design, n, stats, s, stream(seed, "mm-psa", q))
        nb = model.net_benefit(post, lam.value)
        v_post = np.var(nb - nb[:, [ref - 1]], axis=0, ddof=1)
        if prior_variance == "psa":
            return v_post, None
        prior = _posterior_values(model, design, n, stats, s, stream(seed, "mm-psa", q), update=False)
        nb0 = model.net_benefit(prior, lam.value)
        return v_post, np.var(nb0 - nb0[:, [ref - 1]], axis=0, ddof=1)

    results = map_rows(run, Q, threads)
    sigma2_q = np.array([r[0] for r in results])
    if prior_variance == "psa":
        prior_var = np.var(inb, axis=0, ddof=1)
    else:
        prior_var = sequential_mean(np.array([r[1] for r in results]), axis=0)
    raw = prior_var - sequential_mean(sigma2_q, axis=0)
    raw[ref - 1] = 0.0
    target = np.maximum(raw, 0.0)
    ledger = MmVarianceLedger(phi_q, sigma2_q, prior_var, raw, target)

    mu = mm_rescale(eta, target)
    mu[:, ref - 1] = 0.0
    for msg in warn:
        warnings.warn(msg, stacklevel=2)
    est = evsi_from_posterior_means(PosteriorMeanMatrix(mu, ref), "mm", n, reference=ref,
                                    quantile_basis=basis, ledger=ledger, evppi=evppi_val,
                                    evpi=evpi_val, warnings=warn)
    reg = aug.regression
    if bootstrap <= 1 or reg is None:
        return est

    def transform(e):
        r = mm_rescale(e, target)
        r[:, ref - 1] = 0.0
        return r

    build = _refit_builder(reg.training_design(), ref, aug.n_strategies, transform)
    return _with_bootstrap(est, reg.bootstrap_se(seed, "mm-bootstrap", build, bootstrap))


# ------------------------------------------------------------------ oracle

def evsi_oracle(model: DecisionModel, design: StudyDesign, lam, outer: int = 1000, inner: int = 1000,
                seed: int = 0, threads: int | None = None) -> VoiEstimate:
    """Nested Monte Carlo: for each outer draw of the parameters simulate a
    study, draw ``inner`` times from the posterior (parameters outside the
    design from their prior) and average the net benefit."""
    if outer < 100 or inner < 100:
        raise DataError("outer and inner sample counts must both be >= 100")
    design.check_model(model)
    lam = as_threshold(lam)
    n = design.sample_size
    t = len(model.strategies)
    if n == 0:
        # the posterior is the prior for every dataset, so no decision changes
        zero = np.zeros((outer, t))
        return evsi_from_posterior_means(zero, "oracle", 0, outer=outer, inner=inner)

    def row(i):
        rng = stream(seed, "oracle", i)
        theta = {p.name: float(p.sample(rng)) for p in model.parameters}
        stats = [_draw_stats(o, n, theta[o.param], rng) for o in design.outcomes]
        post = _posterior_values(model, design, n, stats, inner, rng)
        return sequential_mean(model.net_benefit(post, lam.value), axis=0)

    nb = np.array(map_rows(row, outer, threads))
    ref = int(np.argmax(sequential_mean(nb, axis=0))) + 1
    mu = nb - nb[:, [ref - 1]]
    mu[:, ref - 1] = 0.0
    return evsi_from_posterior_means(PosteriorMeanMatrix(mu, ref), "oracle", n, reference=ref,
                                     outer=outer, inner=inner)


def evsi_curve_csv(estimates: Sequence[VoiEstimate]) -> str:
    """Long-format ``method,N,evsi,se`` rows."""
    lines = ["method,N,evsi,se"]
    for e in estimates:
        se = "" if e.mc_se is None else repr(float(e.mc_se))
        lines.append(f"{e.method},{e.design_N},{float(e.value)!r},{se}")
    return "\n".join(lines) + "\n"
