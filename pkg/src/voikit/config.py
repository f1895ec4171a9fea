"""Flat ``key = value`` run configuration shared by the CLI and scripts.

Example::

    # a study of response rates
    model = beta-binomial
    lambda = 10000
    prior.p.resp = beta 6 14
    outcome.responders = binomial p.resp
    n = 50
    n_list = 10, 50, 250
    psa.samples = 5000
    population.incidence = 1000
    population.horizon = 10
    population.discount = 0.035
    cost.fixed = 50000
    cost.per_participant = 800

Keys
----
``model``
    A built-in model name, or ``package.module:factory`` naming a function
    that returns a :class:`~voikit.model.DecisionModel`.
``lambda``
    Willingness-to-pay threshold.
``prior.<parameter>``
    ``family a b``; replaces the model's prior for that parameter.
``outcome.<name>``
    ``family parameter [variance=v] [mean=m] [exposure=e]``.  Families:
    binomial, normal, normal-known-mean, poisson, exponential.
``phi``
    Comma-separated parameters of interest; defaults to the parameters the
    outcomes inform.
``n``, ``n_list``
    Study sample size, and the sizes to evaluate for EVSI curves.
``psa.samples``
    PSA size when the PSA is generated rather than read.
``population.*``, ``cost.*``
    ENBS inputs (incidence, horizon, discount; fixed, per_participant).
``n0.<parameter>``
    Prior effective sample size for the Gaussian approximation.

Blank lines and text after ``#`` are ignored.  Unknown or repeated keys
are errors.  When ``model`` names a built-in model and no outcomes are
given, its documented default study is used.
"""

from __future__ import annotations

import importlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import builtin
from .distributions import ParameterSpec
from .enbs import CostModel, PopulationSpec
from .errors import DataError, FormatError
from .model import DecisionModel, Outcome, StudyDesign

_SCALAR_KEYS = {"model", "lambda", "phi", "n", "n_list", "psa.samples", "population.incidence",
                "population.horizon", "population.discount", "cost.fixed", "cost.per_participant"}
_PREFIX_KEYS = ("prior.", "outcome.", "n0.")
_LINE_RE = re.compile(r"^\s*([A-Za-z0-9_.\-]+)\s*=\s*(.*?)\s*$")


@dataclass
class RunConfig:
    model: DecisionModel | None = None
    model_name: str | None = None
    lam: float | None = None
    design: StudyDesign | None = None
    phi: tuple[str, ...] = ()
    n_list: tuple[int, ...] = ()
    psa_samples: int | None = None
    population: PopulationSpec | None = None
    cost: CostModel | None = None
    n0: dict = field(default_factory=dict)


def _number(key, text, kind=float):
    try:
        v = kind(text)
    except ValueError:
        raise FormatError(f"{key}: expected a number, got {text!r}") from None
    return v


def _int_list(key, text):
    return tuple(_number(key, t.strip(), int) for t in text.split(",") if t.strip())


def parse_config(text: str) -> dict:
    """Parse into an ordered ``{key: value}`` mapping of raw strings."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise FormatError(f"config line {lineno}: expected 'key = value'")
        key, value = m.group(1), m.group(2)
        if key not in _SCALAR_KEYS and not key.startswith(_PREFIX_KEYS):
            raise FormatError(f"config line {lineno}: unknown key {key!r}")
        if key in out:
            raise FormatError(f"config line {lineno}: {key!r} given twice")
        out[key] = value
    return out


def _load_model(name: str) -> DecisionModel:
    if name in builtin.MODELS:
        return builtin.get_model(name)
    if ":" in name:
        mod, _, attr = name.partition(":")
        try:
            factory = getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError) as exc:
            raise DataError(f"cannot load model {name!r}: {exc}") from None
        model = factory()
        if not isinstance(model, DecisionModel):
            raise DataError(f"{name!r} did not return a DecisionModel")
        return model
    raise DataError(f"unknown model {name!r}; built-in models are {sorted(builtin.MODELS)}")


def _outcome(name: str, text: str) -> Outcome:
    parts = text.split()
    if len(parts) < 2:
        raise FormatError(f"outcome.{name}: expected 'family parameter [key=value ...]'")
    opts = {}
    for p in parts[2:]:
        k, sep, v = p.partition("=")
        if not sep or k not in ("variance", "mean", "exposure"):
            raise FormatError(f"outcome.{name}: bad option {p!r}")
        opts[k] = _number(f"outcome.{name}", v)
    return Outcome(name, parts[0], parts[1], **opts)


def build_config(values: dict) -> RunConfig:
    cfg = RunConfig()
    if "model" in values:
        cfg.model_name = values["model"]
        cfg.model = _load_model(values["model"])
    priors = {}
    for key, v in values.items():
        if key.startswith("prior."):
            name = key[len("prior."):]
            parts = v.split()
            if len(parts) != 3:
                raise FormatError(f"{key}: expected 'family a b'")
            priors[name] = ParameterSpec(name, parts[0], _number(key, parts[1]), _number(key, parts[2]))
    if priors:
        if cfg.model is None:
            raise DataError("prior.* keys need a model")
        cfg.model = cfg.model.with_priors(priors)

    if "lambda" in values:
        cfg.lam = _number("lambda", values["lambda"])
    elif cfg.model_name in builtin.DEFAULT_LAMBDA:
        cfg.lam = builtin.DEFAULT_LAMBDA[cfg.model_name]

    n = _number("n", values["n"], int) if "n" in values else 50
    outcomes = [_outcome(k[len("outcome."):], v) for k, v in values.items() if k.startswith("outcome.")]
    if "phi" in values:
        cfg.phi = tuple(p.strip() for p in values["phi"].split(",") if p.strip())
    if outcomes:
        phi = cfg.phi or tuple(dict.fromkeys(o.param for o in outcomes))
        cfg.design = StudyDesign(phi, tuple(outcomes), n)
    elif cfg.model_name in builtin.MODELS:
        cfg.design = builtin.get_design(cfg.model_name, n)
    if cfg.design is not None:
        if not cfg.phi:
            cfg.phi = cfg.design.phi_names
        if cfg.model is not None:
            cfg.design.check_model(cfg.model)

    if "n_list" in values:
        cfg.n_list = _int_list("n_list", values["n_list"])
    if "psa.samples" in values:
        cfg.psa_samples = _number("psa.samples", values["psa.samples"], int)
    if any(k.startswith("population.") for k in values):
        cfg.population = PopulationSpec(
            _number("population.incidence", values.get("population.incidence", "0")),
            _number("population.horizon", values.get("population.horizon", "1"), int),
            _number("population.discount", values.get("population.discount", "0")))
    if any(k.startswith("cost.") for k in values):
        cfg.cost = CostModel(_number("cost.fixed", values.get("cost.fixed", "0")),
                             _number("cost.per_participant", values.get("cost.per_participant", "0")))
    for key, v in values.items():
        if key.startswith("n0."):
            cfg.n0[key[3:]] = _number(key, v)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    return build_config(parse_config(text))
