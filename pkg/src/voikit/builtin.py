"""Built-in decision models and matching study designs.

These are small, fully documented models for tests, the CLI and
examples.  None of them describes a real clinical question.

``linear-normal``
    Two strategies, ``INB = -950 - psi + 10000 * phi`` at the default
    threshold of 10 000.  ``phi ~ Normal(0.1, 0.05^2)`` is a QALY gain,
    ``psi ~ Normal(0, 200^2)`` is extra cost.  Study: individual QALY
    gains with known variance 0.25, so the prior is worth 100 people.

``beta-binomial``
    Two strategies.  ``p.resp ~ Beta(6, 14)`` is the response
    probability, ``q.gain ~ Normal(0.5, 0.05^2)`` the QALY gain per
    responder, ``c.trt ~ Gamma(100, rate 1/14)`` the treatment cost.
    Study: a single-arm trial counting responders.

``dr-tox``
    Three adjuvant strategies with distant recurrence and toxicity.
    Probability of recurrence under strategy t is
    ``1 - (1 - p.dr.t1) ** hr.dr.t`` (``hr.dr.t1 = 1``); discounted
    QALYs over a 10-year horizon are
    ``L * ((1 - p) * u.ndr + p * u.dr) + p.tox.t * u.d.tox`` with
    ``L = sum_{y<10} 1.035^-y``; cost is
    ``c.trt.t + p * c.dr + p.tox.t * c.tox`` with fixed treatment costs
    ``c.trt = (6000, 16000, 10500)``.  Strategy 2 prevents more recurrences
    and strategy 3 causes less toxicity, so which is better depends on the
    baseline recurrence risk.  Study: observe recurrence in patients on
    strategy 1.

``gamma-poisson``
    Exacerbations at rate ``rate.ex ~ Gamma(8, rate 4)`` per year;
    strategy 2 multiplies the rate by ``rr ~ LogNormal(log 0.7, 0.05^2)``
    and costs 1500 a year.  Each exacerbation costs
    ``c.ex ~ Gamma(25, rate 0.025)`` and loses ``q.ex ~ Beta(30, 970)``
    QALYs.  Study: count exacerbations over one year per patient.

``exponential-survival``
    Mortality hazard ``haz ~ Gamma(10, rate 100)``; strategy 2 applies a
    hazard ratio ``hr ~ LogNormal(log 0.8, 0.03^2)`` and costs 26000 up
    front.  Discounted life expectancy is ``1 / (hazard + 0.035)``,
    weighted by utility 0.8, with 3000 a year of care.  Study: observed
    survival times.
"""

from __future__ import annotations

import math

import numpy as np

from .distributions import ParameterSpec as P
from .errors import DataError
from .model import DecisionModel, Outcome, StudyDesign
from .psa import default_strategies

DEFAULT_LAMBDA = {
    "linear-normal": 10_000.0,
    "beta-binomial": 10_000.0,
    "dr-tox": 100_000.0,
    "gamma-poisson": 30_000.0,
    "exponential-survival": 30_000.0,
}


def _two(a, b):
    return np.column_stack([a, b])


def linear_normal() -> DecisionModel:
    def evaluate(v):
        phi, psi = v["phi"], v["psi"]
        one = np.ones_like(phi)
        return _two(one, one + phi), _two(1000.0 * one, 1950.0 + psi)

    return DecisionModel(
        "linear-normal",
        (P("phi", "normal", 0.1, 0.05**2), P("psi", "normal", 0.0, 200.0**2)),
        default_strategies(2, ["current", "new"]),
        evaluate,
        description="incremental net benefit linear in two normal parameters",
    )


def linear_normal_design(n: int = 50) -> StudyDesign:
    return StudyDesign(("phi",), (Outcome("qaly.gain", "normal", "phi", variance=0.25),), n)


def beta_binomial() -> DecisionModel:
    def evaluate(v):
        p, g, c = v["p.resp"], v["q.gain"], v["c.trt"]
        base = np.full_like(p, 5.0)
        return _two(base, base + p * g), _two(np.zeros_like(p), c)

    return DecisionModel(
        "beta-binomial",
        (P("p.resp", "beta", 6, 14), P("q.gain", "normal", 0.5, 0.05**2), P("c.trt", "gamma", 100, 1 / 14)),
        default_strategies(2, ["no treatment", "treatment"]),
        evaluate,
        description="response-probability model informed by a single-arm trial",
    )


def beta_binomial_design(n: int = 50) -> StudyDesign:
    return StudyDesign(("p.resp",), (Outcome("responders", "binomial", "p.resp"),), n)


_DR_TOX_TRT = (6000.0, 16000.0, 10500.0)
_DR_TOX_L = sum(1.035**-y for y in range(10))


def dr_tox() -> DecisionModel:
    def evaluate(v):
        p1 = v["p.dr.t1"]
        p = np.column_stack([p1, 1 - (1 - p1) ** v["hr.dr.t2"], 1 - (1 - p1) ** v["hr.dr.t3"]])
        tox = np.column_stack([v["p.tox.t1"], v["p.tox.t2"], v["p.tox.t3"]])
        u_ndr, u_dr = v["u.ndr"][:, None], v["u.dr"][:, None]
        qaly = _DR_TOX_L * ((1 - p) * u_ndr + p * u_dr) + tox * v["u.d.tox"][:, None]
        cost = np.asarray(_DR_TOX_TRT) + p * v["c.dr"][:, None] + tox * v["c.tox"][:, None]
        return qaly, cost

    params = (
        P("p.dr.t1", "beta", 9, 21),
        P("hr.dr.t2", "lognormal", math.log(0.45), 0.05**2),
        P("hr.dr.t3", "lognormal", math.log(0.70), 0.05**2),
        P("p.tox.t1", "beta", 38, 62),
        P("p.tox.t2", "beta", 21, 79),
        P("p.tox.t3", "beta", 6, 94),
        P("u.ndr", "beta", 85, 15),
        P("u.dr", "beta", 70, 30),
        P("u.d.tox", "normal", -0.025, 0.006**2),
        P("c.dr", "gamma", 10, 10 / 20_000),
        P("c.tox", "gamma", 16, 16 / 33_000),
    )
    return DecisionModel("dr-tox", params, default_strategies(3, ["t1", "t2", "t3"]), evaluate,
                         description="hypothetical three-strategy recurrence/toxicity cohort model")


def dr_tox_design(n: int = 50) -> StudyDesign:
    return StudyDesign(("p.dr.t1",), (Outcome("recurrence", "binomial", "p.dr.t1"),), n)


def gamma_poisson() -> DecisionModel:
    def evaluate(v):
        r, rr, c, q = v["rate.ex"], v["rr"], v["c.ex"], v["q.ex"]
        r2 = r * rr
        return _two(1.0 - r * q, 1.0 - r2 * q), _two(r * c, 1500.0 + r2 * c)

    params = (
        P("rate.ex", "gamma", 8, 4),
        P("rr", "lognormal", math.log(0.7), 0.05**2),
        P("c.ex", "gamma", 25, 0.025),
        P("q.ex", "beta", 30, 970),
    )
    return DecisionModel("gamma-poisson", params, default_strategies(2, ["usual care", "prevention"]),
                         evaluate, description="exacerbation-rate model")


def gamma_poisson_design(n: int = 50) -> StudyDesign:
    return StudyDesign(("rate.ex",), (Outcome("exacerbations", "poisson", "rate.ex", exposure=1.0),), n)


def exponential_survival() -> DecisionModel:
    def evaluate(v):
        h, hr = v["haz"], v["hr"]
        le1, le2 = 1.0 / (h + 0.035), 1.0 / (h * hr + 0.035)
        return _two(0.8 * le1, 0.8 * le2), _two(3000.0 * le1, 26000.0 + 3000.0 * le2)

    params = (P("haz", "gamma", 10, 100), P("hr", "lognormal", math.log(0.8), 0.03**2))
    return DecisionModel("exponential-survival", params, default_strategies(2, ["standard", "new"]),
                         evaluate, description="constant-hazard survival model")


def exponential_survival_design(n: int = 50) -> StudyDesign:
    return StudyDesign(("haz",), (Outcome("survival.time", "exponential", "haz"),), n)


MODELS = {
    "linear-normal": (linear_normal, linear_normal_design),
    "beta-binomial": (beta_binomial, beta_binomial_design),
    "dr-tox": (dr_tox, dr_tox_design),
    "gamma-poisson": (gamma_poisson, gamma_poisson_design),
    "exponential-survival": (exponential_survival, exponential_survival_design),
}


def get_model(name: str) -> DecisionModel:
    try:
        return MODELS[name][0]()
    except KeyError:
        raise DataError(f"unknown built-in model {name!r}; choose from {sorted(MODELS)}") from None


def get_design(name: str, n: int = 50) -> StudyDesign:
    try:
        return MODELS[name][1](n)
    except KeyError:
        raise DataError(f"unknown built-in model {name!r}; choose from {sorted(MODELS)}") from None
