"""Prior effective sample size n0: the number of study participants whose
data would carry as much information as the prior.

Three routes:

* :func:`ess_direct` reads n0 off a conjugate prior's hyperparameters;
* :func:`ess_from_summary` compares the variance of a simulated data
  summary with the prior variance;
* :func:`ess_from_posterior_means` compares the prior variance with the
  variance of simulated posterior means.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .distributions import ParameterSpec
from .errors import DataError, EstimationError
from .evsi import importance_weights
from .model import (StudyDesign, _loglik_stats, has_conjugate_update, metropolis_posterior_batch,
                    posterior_means_batch, simulate_batch, summarize_batch)
from .psa import PsaDataset
from .rng import map_rows, stream

METHODS = ("direct", "summary", "posterior-mean")
WEAK_PRIOR_RATIO = 0.01  # n0 / n below this is flagged
IS_MAX_ROWS = 5000
METROPOLIS_MAX_ROWS = 2000


@dataclass(frozen=True)
class EssEstimate:
    parameter: str
    n0: float
    method: str
    diagnostics: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown ESS method {self.method!r}")
        if not (self.n0 > 0 and np.isfinite(self.n0)):
            raise EstimationError(f"{self.parameter}: prior effective sample size must be a positive "
                                  f"finite number, got {self.n0}")

    def to_record(self) -> dict:
        return {"parameter": self.parameter, "n0": self.n0, "method": self.method,
                "diagnostics": dict(self.diagnostics)}


def ess_direct(prior: ParameterSpec, family: str, variance: float | None = None,
               exposure: float = 1.0, convention: str = "conjugate") -> EssEstimate:
    """n0 from the prior's hyperparameters for a conjugate pair.

    ==========================  ==========================  ============
    prior                       sampling family             n0
    ==========================  ==========================  ============
    Beta(a, b)                  binomial                    a + b
    Gamma(a, rate b)            exponential                 a
    Gamma(a, rate b)            poisson, exposure e each    b / e
    Normal(m, variance b)       normal, known variance s2   s2 / b
    InverseGamma(a, scale b)    normal-known-mean           2a
    ==========================  ==========================  ============

    Each entry is the number of observations whose conjugate update adds
    as much as the prior holds.  ``convention="table"`` instead returns
    the commonly tabulated ``1 / b`` for Gamma-Poisson (which assumes a
    scale parameter) and ``a`` for InverseGamma.
    """
    if convention not in ("conjugate", "table"):
        raise DataError(f"unknown convention {convention!r}")
    fam = family.lower()
    pair = (prior.family, fam)
    a, b = prior.a, prior.b
    if pair == ("beta", "binomial"):
        n0 = a + b
    elif pair == ("gamma", "exponential"):
        n0 = a
    elif pair == ("gamma", "poisson"):
        if not exposure > 0:
            raise DataError("exposure must be > 0")
        n0 = b / exposure if convention == "conjugate" else 1.0 / b
    elif pair == ("normal", "normal"):
        if not (variance and variance > 0):
            raise DataError("normal sampling needs the known variance")
        n0 = variance / b
    elif pair == ("invgamma", "normal-known-mean"):
        n0 = 2.0 * a if convention == "conjugate" else a
    else:
        raise EstimationError(f"no direct formula for a {prior.family} prior with {fam} data; "
                              "use the summary or posterior-mean method")
    return EssEstimate(prior.name, float(n0), "direct", {"family": fam, "convention": convention})


def ess_direct_for_design(prior: ParameterSpec, design: StudyDesign, convention: str = "conjugate"):
    """:func:`ess_direct` using the (single) outcome linked to ``prior``."""
    o = _linked_outcome(design, prior.name)
    return ess_direct(prior, o.family, o.variance, o.exposure, convention)


def n0_from_summary_variance(var_w: float, var_phi: float, n: int) -> float:
    """``n (Var(W) / Var(phi) - 1)``; raises when not positive."""
    if not var_w > var_phi:
        raise EstimationError(
            f"summary variance {var_w:.6g} does not exceed the prior variance {var_phi:.6g}; "
            "the summary is probably not on the parameter's scale")
    return n * (var_w / var_phi - 1.0)


def n0_from_posterior_variance(var_phi: float, var_mu: float, n: int) -> float:
    """``n (Var(phi) / Var(mu) - 1)``; raises when not positive."""
    if not var_mu > 0:
        raise EstimationError("posterior means do not vary; cannot estimate n0")
    if not var_mu < var_phi:
        raise EstimationError(
            f"posterior means vary more than the prior ({var_mu:.6g} >= {var_phi:.6g})")
    return n * (var_phi / var_mu - 1.0)


def _linked_outcome(design: StudyDesign, name: str):
    idx = design.outcomes_for(name)
    if not idx:
        raise DataError(f"no study outcome informs {name!r}")
    if len(idx) > 1:
        raise DataError(f"{name!r} is informed by {len(idx)} outcomes; the ESS needs a single one")
    return design.outcomes[idx[0]]


def _pilot(design: StudyDesign, name: str, n: int) -> StudyDesign:
    if n < 2:
        raise DataError("pilot sample size must be >= 2")
    return StudyDesign((name,), (_linked_outcome(design, name),), n)


def _flag(n0: float, n: int, diag: dict) -> dict:
    if n0 / n < WEAK_PRIOR_RATIO:
        diag["weak_prior"] = True
    return diag


def ess_from_summary(design: StudyDesign, ds: PsaDataset, phi_name: str, n: int, seed: int,
                     threads: int | None = None) -> EssEstimate:
    """Simulate a pilot study of size ``n`` for every PSA row and compare
    the variance of its summary with the variance of the parameter."""
    pilot = _pilot(design, phi_name, n)
    phi = ds.param(phi_name)
    batch = simulate_batch(pilot, {phi_name: phi}, seed, "ess-summary", threads=threads)
    w = summarize_batch(batch)[:, 0]
    var_w, var_phi = float(np.var(w, ddof=1)), float(np.var(phi, ddof=1))
    n0 = n0_from_summary_variance(var_w, var_phi, n)
    return EssEstimate(phi_name, n0, "summary",
                       _flag(n0, n, {"var_summary": var_w, "var_phi": var_phi, "n": n}))


def ess_from_posterior_means(design: StudyDesign, ds: PsaDataset, phi_name: str, n: int, seed: int,
                             prior: ParameterSpec | None = None, update: str = "auto",
                             threads: int | None = None) -> EssEstimate:
    """Simulate a pilot study per PSA row, compute the posterior mean of the
    parameter and compare its variance with the prior variance.

    ``update``: ``"conjugate"`` (needs ``prior``), ``"importance"``
    (self-normalised weights over at most ``IS_MAX_ROWS`` PSA rows),
    ``"metropolis"`` (needs ``prior``; at most ``METROPOLIS_MAX_ROWS``
    datasets, one chain each with 1000 burn-in plus 5000 iterations) or ``"auto"``, which
    picks conjugate when possible and importance sampling otherwise.
    """
    pilot = _pilot(design, phi_name, n)
    phi = ds.param(phi_name)
    if update == "auto":
        update = "conjugate" if prior is not None and has_conjugate_update(prior, pilot) else "importance"
    if update in ("conjugate", "metropolis") and prior is None:
        raise DataError(f"{update} updating needs the prior of {phi_name!r}")

    if update == "conjugate":
        batch = simulate_batch(pilot, {phi_name: phi}, seed, "ess-posterior", threads=threads)
        mu = posterior_means_batch(prior, batch)
        var_phi = float(np.var(phi, ddof=1))
    elif update == "importance":
        rows = min(len(phi), IS_MAX_ROWS)
        sub = phi[:rows]
        batch = simulate_batch(pilot, {phi_name: sub}, seed, "ess-posterior", threads=threads)
        support = {phi_name: sub}

        def one(s):
            w = importance_weights(_loglik_stats(pilot, n, batch.row(s), support))
            return float(w @ sub)

        mu = np.array(map_rows(one, rows, threads))
        var_phi = float(np.var(sub, ddof=1))
    elif update == "metropolis":
        rows = min(len(phi), METROPOLIS_MAX_ROWS)
        sub = phi[:rows]
        batch = simulate_batch(pilot, {phi_name: sub}, seed, "ess-posterior", threads=threads)
        draws = metropolis_posterior_batch(prior, pilot, n, batch.stats, 1000, stream(seed, "ess-mcmc"))
        mu = draws.mean(axis=0)
        var_phi = float(np.var(sub, ddof=1))
    else:
        raise DataError(f"unknown update {update!r}")

    var_mu = float(np.var(mu, ddof=1))
    n0 = n0_from_posterior_variance(var_phi, var_mu, n)
    return EssEstimate(phi_name, n0, "posterior-mean",
                       _flag(n0, n, {"var_phi": var_phi, "var_posterior_mean": var_mu, "n": n,
                                     "update": update}))
