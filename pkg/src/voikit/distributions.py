"""Prior families for model parameters.

Gamma is rate-parameterised throughout (mean ``a / b``); Normal takes a
variance, not a standard deviation; InverseGamma is (shape, scale);
LogNormal takes the mean and variance of the log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DataError

FAMILIES = ("beta", "gamma", "normal", "invgamma", "lognormal")

_ALIASES = {
    "inversegamma": "invgamma",
    "inverse-gamma": "invgamma",
    "inv-gamma": "invgamma",
    "log-normal": "lognormal",
}


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    family: str
    a: float
    b: float

    def __post_init__(self):
        fam = _ALIASES.get(self.family.lower(), self.family.lower())
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise DataError(f"{self.name}: unknown prior family {self.family!r}")
        a, b = float(self.a), float(self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise DataError(f"{self.name}: hyperparameters must be finite")
        if fam in ("normal", "lognormal"):
            if b <= 0:
                raise DataError(f"{self.name}: variance must be > 0")
        elif a <= 0 or b <= 0:
            raise DataError(f"{self.name}: {fam} hyperparameters must be > 0")

    def __str__(self):
        return f"{self.family}({self.a:g}, {self.b:g})"

    # moments ------------------------------------------------------------
    @property
    def mean(self) -> float:
        a, b = self.a, self.b
        return {
            "beta": lambda: a / (a + b),
            "gamma": lambda: a / b,
            "normal": lambda: a,
            "invgamma": lambda: b / (a - 1) if a > 1 else math.inf,
            "lognormal": lambda: math.exp(a + b / 2),
        }[self.family]()

    @property
    def variance(self) -> float:
        a, b = self.a, self.b
        if self.family == "beta":
            return a * b / ((a + b) ** 2 * (a + b + 1))
        if self.family == "gamma":
            return a / b**2
        if self.family == "normal":
            return b
        if self.family == "invgamma":
            return b**2 / ((a - 1) ** 2 * (a - 2)) if a > 2 else math.inf
        return (math.exp(b) - 1) * math.exp(2 * a + b)

    # sampling and density ----------------------------------------------
    def sample(self, rng: np.random.Generator, size=None):
        a, b = self.a, self.b
        if self.family == "beta":
            return rng.beta(a, b, size)
        if self.family == "gamma":
            return rng.gamma(a, 1.0 / b, size)
        if self.family == "normal":
            return rng.normal(a, math.sqrt(b), size)
        if self.family == "invgamma":
            return b / rng.gamma(a, 1.0, size)
        return rng.lognormal(a, math.sqrt(b), size)

    def logpdf(self, x):
        """Log density, ``-inf`` outside the support."""
        a, b = self.a, self.b
        x = np.asarray(x, dtype=float)
        ok = self.in_support(x) & ~np.isnan(x)
        if self.family == "normal":
            return np.where(ok, -0.5 * math.log(2 * math.pi * b) - (x - a) ** 2 / (2 * b), -np.inf)
        if self.family == "beta":
            xs = np.where(ok, x, 0.5)
            out = special.xlogy(a - 1, xs) + special.xlog1py(b - 1, -xs) - special.betaln(a, b)
        else:
            xs = np.where(ok, x, 1.0)
            lx = np.log(xs)
            if self.family == "gamma":
                out = a * math.log(b) - special.gammaln(a) + (a - 1) * lx - b * xs
            elif self.family == "invgamma":
                out = a * math.log(b) - special.gammaln(a) - (a + 1) * lx - b / xs
            else:
                out = -lx - 0.5 * math.log(2 * math.pi * b) - (lx - a) ** 2 / (2 * b)
        return np.where(ok, out, -np.inf)

    def in_support(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "beta":
            return (x >= 0) & (x <= 1)
        if self.family == "normal":
            return np.isfinite(x)
        return x > 0

    # unconstrained scale for random-walk samplers ------------------------
    def to_unconstrained(self, x):
        if self.family == "beta":
            return special.logit(x)
        if self.family == "normal":
            return np.asarray(x, dtype=float)
        return np.log(x)

    def from_unconstrained(self, z):
        if self.family == "beta":
            return special.expit(z)
        if self.family == "normal":
            return np.asarray(z, dtype=float)
        return np.exp(z)

    def log_jacobian(self, z):
        """log |dx/dz| for :meth:`from_unconstrained`."""
        if self.family == "beta":
            return -np.logaddexp(0, z) - np.logaddexp(0, -z)
        if self.family == "normal":
            return np.zeros_like(np.asarray(z, dtype=float))
        return np.asarray(z, dtype=float)
