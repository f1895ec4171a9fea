"""EVPPI by regressing incremental net benefit on a parameter subset.

Each comparator's INB is fitted by an additive spline metamodel on the
parameters of interest.  The fitted values estimate the conditional
expected INB given those parameters; they are also written back onto the
net benefit scale as the ``eta`` columns of an augmented dataset, with
the reference strategy's column held at its overall mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, DiagnosticsError
from .estimate import VoiEstimate, expected_max_gain
from .metamodel import (DiagnosticsReport, Metamodel, design_matrix, fit_metamodel, refit_rows,
                        residual_diagnostics)
from .psa import (AugmentedPsaDataset, PsaDataset, as_threshold, compute_incremental_net_benefit,
                  compute_net_benefit)
from .rng import sequential_mean, stream

BOOTSTRAP_REPS = 200


@dataclass(frozen=True, eq=False)
class InbRegression:
    """Metamodels of each comparator's INB on the same covariates.

    ``fitted`` is S x T on the INB scale with the reference column zero.
    """

    reference: int
    covariate_names: tuple[str, ...]
    models: dict  # 0-based strategy index -> Metamodel
    reports: dict  # 0-based strategy index -> DiagnosticsReport
    inb: np.ndarray
    fitted: np.ndarray

    def worst_status(self) -> str:
        order = {"PASS": 0, "WARN": 1, "FAIL": 2}
        return max((r.status for r in self.reports.values()), key=order.__getitem__, default="PASS")

    def diagnostics(self) -> dict:
        return {f"t{t + 1}": r.to_dict() for t, r in self.reports.items()}

    def training_design(self) -> np.ndarray:
        # every comparator shares the covariates, hence the basis
        return design_matrix(next(iter(self.models.values())))

    def predict_design(self, covariates) -> np.ndarray:
        return design_matrix(next(iter(self.models.values())), covariates)

    def refit(self, design: np.ndarray, idx: np.ndarray) -> dict:
        """Per-comparator ``(intercept, beta)`` refitted on rows ``idx``."""
        return {t: refit_rows(m, design, idx) for t, m in self.models.items()}

    def bootstrap_se(self, seed: int, purpose: str, build, reps: int = BOOTSTRAP_REPS) -> float:
        """Bootstrap standard error of the EVxI estimate.

        Each replicate resamples PSA rows, refits every metamodel at fixed
        knots and smoothing, and calls ``build(idx, coefs)`` for the
        replicate's S x T matrix of conditional means.
        """
        rng = stream(seed, purpose)
        design = self.training_design()
        s = self.inb.shape[0]
        vals = np.empty(reps)
        for b in range(reps):
            idx = rng.integers(0, s, s)
            vals[b] = expected_max_gain(build(idx, self.refit(design, idx)))[1]
        return float(np.std(vals, ddof=1))

    def fitted_bootstrap_se(self, seed: int, purpose: str, reps: int = BOOTSTRAP_REPS,
                            design: np.ndarray | None = None) -> float:
        """Bootstrap SE when the replicate's means are the refitted model
        evaluated at ``design`` rows (the training rows by default)."""
        d = self.training_design() if design is None else design

        def build(idx, coefs):
            out = np.zeros((len(idx), self.inb.shape[1]))
            rows = d[idx]
            for t, (a, beta) in coefs.items():
                out[:, t] = a + rows @ beta
            return out

        return self.bootstrap_se(seed, purpose, build, reps)


def fit_inb_regression(inb: np.ndarray, covariates: np.ndarray, names: Sequence[str], reference: int,
                       n_knots: int = 10, what: str = "EVPPI") -> InbRegression:
    """Fit one metamodel per comparator; raise if any diagnostics FAIL."""
    inb = np.asarray(inb, dtype=float)
    models: dict[int, Metamodel] = {}
    reports: dict[int, DiagnosticsReport] = {}
    fitted = np.zeros_like(inb)
    for t in range(inb.shape[1]):
        if t == reference - 1:
            continue
        m = fit_metamodel(covariates, inb[:, t], names=names, n_knots=n_knots)
        rep = residual_diagnostics(m)
        if rep.status == "FAIL":
            raise DiagnosticsError(
                f"{what}: metamodel for strategy {t + 1} failed its residual checks: "
                + "; ".join(rep.messages), rep)
        models[t], reports[t] = m, rep
        fitted[:, t] = m.fitted
    return InbRegression(reference, tuple(names), models, reports, inb, fitted)


def estimate_evppi(ds: PsaDataset, phi_names: Sequence[str], lam, seed: int = 0, n_knots: int = 10,
                   reference: int | str = "auto", bootstrap: int = BOOTSTRAP_REPS
                   ) -> tuple[VoiEstimate, AugmentedPsaDataset]:
    """EVPPI for ``phi_names`` and the augmented dataset carrying ``eta``.

    ``mc_se`` is a bootstrap over PSA rows that refits the metamodel
    coefficients (the knots and smoothing weights are not re-selected).
    ``seed`` only drives that bootstrap.
    """
    est, aug, _ = evppi_with_regression(ds, phi_names, lam, seed, n_knots, reference, bootstrap)
    return est, aug


def evppi_with_regression(ds, phi_names, lam, seed=0, n_knots=10, reference="auto",
                          bootstrap=BOOTSTRAP_REPS):
    phi_names = tuple(phi_names)
    if not phi_names:
        raise DataError("EVPPI needs at least one parameter of interest")
    lam = as_threshold(lam)
    nb = compute_net_benefit(ds, lam)
    inc = compute_incremental_net_benefit(nb, reference)
    reg = fit_inb_regression(inc.values, ds.param_matrix(phi_names), phi_names, inc.reference, n_knots)

    value, raw, _ = expected_max_gain(reg.fitted)
    se = reg.fitted_bootstrap_se(seed, "evppi-bootstrap", bootstrap) if bootstrap > 1 else None
    diagnostics = {
        "raw_value": raw,
        "reference": inc.reference,
        "phi": list(phi_names),
        "status": reg.worst_status(),
        "metamodels": reg.diagnostics(),
    }
    est = VoiEstimate("EVPPI", value, se, "gam", None, diagnostics)

    ref_col = nb.values[:, inc.reference - 1]
    eta = float(sequential_mean(ref_col)) + reg.fitted
    aug = AugmentedPsaDataset(ds, nb.values, eta, phi_names, lam, regression=reg)
    return est, aug, reg


def combined_se(*ses) -> float:
    return math.sqrt(sum((s or 0.0) ** 2 for s in ses))
