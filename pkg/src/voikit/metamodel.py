"""Additive penalised cubic B-spline regression.

``y = b0 + sum_j f_j(x_j)``.  Each ``f_j`` is a cubic B-spline with
interior knots at quantiles of ``x_j``, constrained to sum to zero over
the training data (so the intercept is the response mean), and penalised
by the integrated squared second derivative, which leaves its linear part
free.  Smoothing weights are chosen per covariate by minimising GCV over a
fixed log-spaced grid plus an infinite weight that removes the term
entirely, with coordinate sweeps.

Outside the training range each ``f_j`` continues linearly from the
boundary value and slope.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats
from scipy.interpolate import BSpline

from .errors import DataError, DimensionError, NumericError

MAX_COVARIATES = 6
DEGREE = 3
GRID = np.logspace(-6, 6, 41)
GCV_GAMMA = 1.4  # inflates the edf charge; plain GCV overfits pure noise too often
ROWS_PER_COEFFICIENT = 10

# residual diagnostic thresholds
WARN_MEAN = 1e-8  # |residual mean| / sd(y)
WARN_CORR = 0.05  # |corr(residual, fitted)|
WARN_BP_PVALUE = 1e-3
WARN_OUTLIER_FRACTION = 1e-3
FAIL_MEAN = 1e-6
FAIL_CORR = 0.5
OUTLIER_Z = 4.0
EXACT_FIT = 1e-9  # residual sd below this fraction of the response scale


@dataclass(frozen=True, eq=False)
class SplineTerm:
    name: str
    knots: np.ndarray
    lo: float
    hi: float
    constraint: np.ndarray  # m x (m - 1), maps constrained to raw coefficients
    penalty: np.ndarray  # (m - 1) x (m - 1), already scaled

    @property
    def dim(self) -> int:
        return self.constraint.shape[1]

    def _raw_basis(self, x: np.ndarray) -> np.ndarray:
        return BSpline.design_matrix(x, self.knots, DEGREE).toarray()

    def basis(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Constrained design rows and a mask of extrapolated points."""
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        xc = np.clip(x, self.lo, self.hi)
        raw = self._raw_basis(xc)
        if not inside.all():
            m = len(self.knots) - DEGREE - 1
            d1 = BSpline(self.knots, np.eye(m), DEGREE).derivative(1)
            out = ~inside
            raw[out] += (x[out] - xc[out])[:, None] * d1(xc[out])
        return raw @ self.constraint, ~inside


def _build_term(name: str, x: np.ndarray, n_knots: int) -> SplineTerm:
    lo, hi = float(x.min()), float(x.max())
    probs = np.arange(1, n_knots + 1) / (n_knots + 1)
    interior = np.unique(np.quantile(x, probs))
    interior = interior[(interior > lo) & (interior < hi)]
    knots = np.concatenate([[lo] * (DEGREE + 1), interior, [hi] * (DEGREE + 1)])
    m = len(knots) - DEGREE - 1
    raw = BSpline.design_matrix(x, knots, DEGREE).toarray()

    # sum-to-zero constraint: null space of the column sums
    c = raw.sum(axis=0)[:, None]
    q, _ = np.linalg.qr(c, mode="complete")
    z = q[:, 1:]

    # integrated squared second derivative, exact with 3-point Gauss-Legendre per interval
    d2 = BSpline(knots, np.eye(m), DEGREE).derivative(2)
    nodes, weights = np.polynomial.legendre.leggauss(3)
    breaks = np.unique(knots)
    s = np.zeros((m, m))
    for a, b in zip(breaks[:-1], breaks[1:]):
        pts = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        vals = d2(pts)
        s += (vals * (0.5 * (b - a) * weights)[:, None]).T @ vals
    pen = z.T @ s @ z
    xz = raw @ z
    gram = xz.T @ xz
    pnorm = np.linalg.norm(pen)
    scale = np.linalg.norm(gram) / pnorm if pnorm > 0 else 1.0
    return SplineTerm(name, knots, lo, hi, z, pen * scale)


@dataclass(frozen=True, eq=False)
class Metamodel:
    """A fitted additive model; treat as immutable."""

    covariate_names: tuple[str, ...]
    terms: tuple[SplineTerm, ...]
    term_columns: tuple[int, ...]  # covariate column used by each term
    coefficients: np.ndarray  # intercept first
    smoothing: np.ndarray
    fitted: np.ndarray
    response: np.ndarray
    fit_stats: dict = field(default_factory=dict)
    dropped: tuple[str, ...] = ()
    _train_x: np.ndarray | None = field(default=None, repr=False)

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def residuals(self) -> np.ndarray:
        return self.response - self.fitted


def _design(terms, cols, x):
    blocks, extrap = [], np.zeros(x.shape[0], dtype=bool)
    for term, j in zip(terms, cols):
        b, e = term.basis(x[:, j])
        blocks.append(b)
        extrap |= e
    if not blocks:
        return np.zeros((x.shape[0], 0)), extrap
    return np.hstack(blocks), extrap


def _as_matrix(covariates) -> np.ndarray:
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DataError("covariates must be an S x d matrix")
    return x


def _active_columns(terms, lams) -> np.ndarray:
    # an infinite weight switches the whole term off
    return np.concatenate([np.full(t.dim, np.isfinite(lam)) for t, lam in zip(terms, lams)]
                          or [np.zeros(0, dtype=bool)])


def _penalty(terms, lams) -> np.ndarray:
    dim = sum(t.dim for t in terms)
    p = np.zeros((dim, dim))
    start = 0
    for t, lam in zip(terms, lams):
        if np.isfinite(lam):
            p[start:start + t.dim, start:start + t.dim] = lam * t.penalty
        start += t.dim
    return p


class _PenalisedSystem:
    def __init__(self, x, y, terms):
        self.gram = x.T @ x
        self.xty = x.T @ y
        self.yty = float(y @ y)
        self.n = len(y)
        self.blocks = []
        start = 0
        for t in terms:
            self.blocks.append(slice(start, start + t.dim))
            start += t.dim
        self.terms = terms

    def solve(self, lams):
        on = _active_columns(self.terms, lams)
        a = self.gram[np.ix_(on, on)] + _penalty(self.terms, lams)[np.ix_(on, on)]
        beta = np.zeros(len(self.xty))
        infl = np.zeros_like(self.gram)
        if not on.any():
            return beta, infl
        try:
            cf = linalg.cho_factor(a, check_finite=False)
        except linalg.LinAlgError:
            raise NumericError("penalised normal equations are singular") from None
        beta[on] = linalg.cho_solve(cf, self.xty[on], check_finite=False)
        infl[np.ix_(on, on)] = linalg.cho_solve(cf, self.gram[np.ix_(on, on)], check_finite=False)
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(infl))):
            raise NumericError("penalised normal equations are singular")
        return beta, infl

    def gcv(self, lams):
        beta, infl = self.solve(lams)
        edf = 1.0 + float(np.trace(infl))
        rss = max(self.yty - 2.0 * float(beta @ self.xty) + float(beta @ self.gram @ beta), 0.0)
        denom = (self.n - GCV_GAMMA * edf) ** 2
        return self.n * rss / denom if denom > 0 else math.inf


def _select_smoothing(system: _PenalisedSystem, var_y: float, max_sweeps: int = 10) -> np.ndarray:
    d = len(system.terms)
    grid = np.append(GRID, np.inf)
    idx = np.full(d, len(GRID) // 2)
    tol = 1e-24 * (var_y + 1e-300)
    for _ in range(max_sweeps):
        changed = False
        for j in range(d):
            scores = np.empty(len(grid))
            for g, lam in enumerate(grid):
                trial = grid[idx].copy()
                trial[j] = lam
                try:
                    scores[g] = system.gcv(trial)
                except NumericError:
                    scores[g] = math.inf
            if not np.isfinite(scores).any():
                raise NumericError("no smoothing weight gives a solvable system")
            best = float(np.min(scores))
            # ties resolve to the smoothest candidate
            choice = int(np.flatnonzero(scores <= best + tol * max(1.0, abs(best)) + tol)[-1])
            if choice != idx[j]:
                idx[j] = choice
                changed = True
        if not changed:
            break
    return grid[idx].copy()


def fit_metamodel(covariates, response, names=None, n_knots: int = 10,
                  smoothing=None) -> Metamodel:
    """Fit the additive spline model.

    ``smoothing`` fixes the per-covariate penalty weights instead of
    selecting them by GCV; ``inf`` removes a term.  Constant covariates are
    dropped with a warning.
    """
    x = _as_matrix(covariates)
    y = np.asarray(response, dtype=float).ravel()
    s, d = x.shape
    names = tuple(names) if names is not None else tuple(f"x{j + 1}" for j in range(d))
    if len(names) != d:
        raise DataError("one name per covariate required")
    if len(y) != s:
        raise DataError("response length does not match covariates")
    if d < 1:
        raise DataError("at least one covariate is required")
    if d > MAX_COVARIATES:
        raise DimensionError(
            f"{d} covariates: additive spline metamodels are limited to {MAX_COVARIATES}; "
            "flexible regression struggles beyond five or six covariates, so group "
            "parameters or reduce the number of study outcomes")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NumericError("covariates and response must be finite")

    cols, dropped = [], []
    for j in range(d):
        if np.ptp(x[:, j]) == 0:
            dropped.append(names[j])
        else:
            cols.append(j)
    if dropped:
        warnings.warn(f"dropping constant covariates {dropped}", stacklevel=2)
    terms = tuple(_build_term(names[j], x[:, j], n_knots) for j in cols)
    total = sum(t.dim for t in terms)
    if s <= ROWS_PER_COEFFICIENT * total:
        raise DataError(f"{s} rows is too few for {total} spline coefficients; "
                        f"need more than {ROWS_PER_COEFFICIENT * total} (or fewer knots)")

    mean_y = float(np.mean(y))
    yc = y - mean_y
    xd, _ = _design(terms, cols, x)
    system = _PenalisedSystem(xd, yc, terms)
    if terms:
        if smoothing is None:
            lams = _select_smoothing(system, float(np.var(y)))
        else:
            lams = np.broadcast_to(np.asarray(smoothing, dtype=float), (len(terms),)).copy()
            if np.any(np.isnan(lams) | (lams < 0)):
                raise DataError("smoothing weights must be >= 0")
        beta, infl = system.solve(lams)
    else:
        lams, beta, infl = np.zeros(0), np.zeros(0), np.zeros((0, 0))
    fitted = mean_y + xd @ beta
    coef = np.concatenate([[mean_y], beta])

    resid = y - fitted
    rss = float(resid @ resid)
    tss = float(yc @ yc)
    term_edf = [float(np.trace(infl[sl, sl])) for sl in system.blocks]
    fit_stats = {
        "r2": 1.0 - rss / tss if tss > 0 else 1.0,
        "residual_mean": float(np.mean(resid)),
        "residual_fitted_corr": _corr(resid, fitted),
        "edf": 1.0 + float(sum(term_edf)),
        "term_edf": dict(zip((t.name for t in terms), term_edf)),
        "rss": rss,
        "n": s,
    }
    return Metamodel(names, terms, tuple(cols), coef, np.asarray(lams), fitted, y,
                     fit_stats, tuple(dropped), x.copy())


def _corr(a, b) -> float:
    sa, sb = np.std(a), np.std(b)
    if sa == 0 or sb == 0 or not (np.isfinite(sa) and np.isfinite(sb)):
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def predict(m: Metamodel, covariates, return_extrapolated: bool = False):
    """Evaluate the fitted additive function.

    Points outside a covariate's training range use the linear tail; pass
    ``return_extrapolated=True`` to get a boolean mask of those rows.
    """
    x = _as_matrix(covariates)
    if x.shape[1] != len(m.covariate_names):
        raise DataError(f"expected {len(m.covariate_names)} covariates, got {x.shape[1]}")
    if m._train_x is not None and x.shape == m._train_x.shape and np.array_equal(x, m._train_x):
        out, extrap = m.fitted.copy(), np.zeros(x.shape[0], dtype=bool)
    else:
        xd, extrap = _design(m.terms, m.term_columns, x)
        out = m.intercept + xd @ m.coefficients[1:]
    return (out, extrap) if return_extrapolated else out


def effective_df(m: Metamodel, smoothing) -> float:
    """Effective degrees of freedom of the same basis at other penalty weights."""
    xd, _ = _design(m.terms, m.term_columns, m._train_x)
    system = _PenalisedSystem(xd, m.response - m.response.mean(), m.terms)
    lams = np.broadcast_to(np.asarray(smoothing, dtype=float), (len(m.terms),))
    _, infl = system.solve(lams)
    return 1.0 + float(np.trace(infl))


@dataclass(frozen=True)
class DiagnosticsReport:
    residual_mean: float
    residual_fitted_corr: float
    bp_statistic: float
    bp_pvalue: float
    n_outliers: int
    r2: float
    status: str
    messages: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "residual_mean": self.residual_mean,
            "residual_fitted_corr": self.residual_fitted_corr,
            "bp_statistic": self.bp_statistic,
            "bp_pvalue": self.bp_pvalue,
            "n_outliers": self.n_outliers,
            "r2": self.r2,
            "status": self.status,
            "messages": list(self.messages),
        }


def residual_diagnostics(m: Metamodel) -> DiagnosticsReport:
    """Residual checks against the fitted values.

    Status is ``FAIL`` for non-finite fits, a residual mean above
    ``1e-6 sd(y)`` or ``|corr(residual, fitted)| >= 0.5``; ``WARN`` for a
    residual mean above ``1e-8 sd(y)``, ``|corr| >= 0.05``, a
    Breusch-Pagan p-value below 1e-3, or more than 0.1% of standardised
    residuals beyond 4; otherwise ``PASS``.
    """
    e = m.residuals
    f = m.fitted
    n = len(e)
    sd_y = float(np.std(m.response))
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(e))):
        return DiagnosticsReport(math.nan, math.nan, math.nan, math.nan, 0, math.nan, "FAIL",
                                 ("non-finite fitted values",))
    mean = float(np.mean(e))
    if float(np.std(e)) <= EXACT_FIT * max(sd_y, abs(float(np.mean(m.response)))):
        # residuals are rounding noise: nothing left to diagnose
        return DiagnosticsReport(mean, 0.0, 0.0, 1.0, 0, m.fit_stats.get("r2", 1.0), "PASS")
    corr = _corr(e, f)

    # Koenker's studentised Breusch-Pagan: n R^2 of e^2 on fitted values
    e2 = e * e
    r = _corr(e2, f)
    bp = n * r * r
    bp_p = float(stats.chi2.sf(bp, 1))

    dof = max(n - m.fit_stats.get("edf", 1.0), 1.0)
    sigma = math.sqrt(float(e @ e) / dof)
    n_out = int(np.sum(np.abs(e) > OUTLIER_Z * sigma)) if sigma > 0 else 0

    msgs = []
    rel_mean = abs(mean) / sd_y if sd_y > 0 else (0.0 if mean == 0 else math.inf)
    status = "PASS"
    if rel_mean >= FAIL_MEAN or abs(corr) >= FAIL_CORR:
        status = "FAIL"
        msgs.append("residuals are systematically related to the fit")
    else:
        if rel_mean >= WARN_MEAN:
            msgs.append(f"residual mean {mean:.3g} is not negligible")
        if abs(corr) >= WARN_CORR:
            msgs.append(f"residual/fitted correlation {corr:.3f}")
        if bp_p < WARN_BP_PVALUE:
            msgs.append(f"residual spread changes with the fitted value (BP p = {bp_p:.2g})")
        if n_out > WARN_OUTLIER_FRACTION * n:
            msgs.append(f"{n_out} standardised residuals beyond {OUTLIER_Z:g}")
        if msgs:
            status = "WARN"
    return DiagnosticsReport(mean, corr, bp, bp_p, n_out, m.fit_stats.get("r2", math.nan), status, tuple(msgs))


def term_curves_csv(m: Metamodel, n_points: int = 101) -> str:
    """``covariate,x,f_hat`` samples of each fitted component over its range."""
    buf = io.StringIO()
    buf.write("covariate,x,f_hat\n")
    start = 0
    for term in m.terms:
        grid = np.linspace(term.lo, term.hi, n_points)
        b, _ = term.basis(grid)
        f = b @ m.coefficients[1 + start:1 + start + term.dim]
        start += term.dim
        for xv, fv in zip(grid, f):
            buf.write(f"{term.name},{xv!r},{float(fv)!r}\n")
    return buf.getvalue()


# ----------------------------------------------------------- bootstrap refits

def design_matrix(m: Metamodel, covariates=None) -> np.ndarray:
    """Constrained basis rows (no intercept column) at ``covariates``,
    or at the training data when omitted."""
    x = m._train_x if covariates is None else _as_matrix(covariates)
    return _design(m.terms, m.term_columns, x)[0]


def penalty_matrix(m: Metamodel) -> np.ndarray:
    """Block penalty at the fitted weights; switched-off terms get zero blocks."""
    return _penalty(m.terms, m.smoothing)


def refit_rows(m: Metamodel, design: np.ndarray, idx: np.ndarray) -> tuple[float, np.ndarray]:
    """Coefficients refitted on training rows ``idx`` (with repeats) at the
    same knots and smoothing weights; returns ``(intercept, beta)``."""
    on = _active_columns(m.terms, m.smoothing)
    beta = np.zeros(design.shape[1])
    design = design[:, on]
    counts = np.bincount(idx, minlength=design.shape[0]).astype(float)
    n = counts.sum()
    y = m.response
    xbar = counts @ design / n
    ybar = float(counts @ y / n)
    xc = design - xbar
    wx = xc * counts[:, None]
    gram = xc.T @ wx + penalty_matrix(m)[np.ix_(on, on)]
    rhs = wx.T @ (y - ybar)
    if on.any():
        try:
            beta[on] = linalg.solve(gram, rhs, assume_a="pos", check_finite=False)
        except (linalg.LinAlgError, ValueError):
            beta[on] = linalg.lstsq(gram, rhs, check_finite=False)[0]
    return ybar - float(xbar @ beta[on]), beta
