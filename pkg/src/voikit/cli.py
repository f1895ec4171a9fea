"""Command-line interface.

Exit status: 0 success, 2 usage error, 3 data or validation error,
4 numeric or method error.  Failures print a message and a one-line JSON
error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config
from .enbs import CostModel, PopulationSpec, enbs_curve
from .errors import DataError, MethodError, VoiError
from .ess import ess_direct_for_design, ess_from_posterior_means, ess_from_summary
from .estimate import _jsonable
from .evppi import estimate_evppi
from .evsi import evsi_curve_csv, evsi_ga, evsi_is, evsi_mm, evsi_oracle, evsi_rb
from .metamodel import MAX_COVARIATES
from .model import run_psa
from .psa import (compute_net_benefit, decision_uncertainty_curves, evpi, load_psa_dataset,
                  save_psa_dataset)
from .rng import set_default_threads

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_METHOD = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with the package's stderr error record on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        _fail("UsageError", f"{self.prog}: {message}", EXIT_USAGE)
        sys.exit(EXIT_USAGE)


# ------------------------------------------------------------------ parsing helpers

def _int_list(text: str) -> list[int]:
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text: str) -> list[float]:
    try:
        out = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _non_negative_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive_int(text: str) -> int:
    v = _non_negative_int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _n0_pairs(text: str) -> dict:
    out = {}
    for part in _names(text):
        k, sep, v = part.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected name=value, got {part!r}")
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad n0 value {v!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="voi", description="Value of information analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (key = value)")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: available cores); results do not depend on it")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")
    common.add_argument("--out", help="write the result here instead of standard output")

    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=_non_negative_int, required=True, help="random seed")

    psa_src = argparse.ArgumentParser(add_help=False)
    psa_src.add_argument("--psa", help="PSA CSV to read (otherwise one is generated from --config)")
    psa_src.add_argument("--samples", type=_positive_int, help="PSA size when generating")
    psa_src.add_argument("--lambda", dest="lam", type=float, help="willingness-to-pay threshold")

    c = sub.add_parser("psa", parents=[common, seeded], help="generate a PSA dataset from a model")
    c.add_argument("--samples", type=_positive_int, help="number of PSA draws (default: psa.samples or 1000)")

    sub.add_parser("evpi", parents=[common, psa_src], help="expected value of perfect information")
    # evpi is deterministic given a PSA file but generating one needs a seed
    sub.choices["evpi"].add_argument("--seed", type=_non_negative_int, help="seed when generating the PSA")

    c = sub.add_parser("evppi", parents=[common, seeded, psa_src], help="EVPPI and the augmented dataset")
    c.add_argument("--phi", type=_names, help="comma-separated parameters of interest")
    c.add_argument("--knots", type=_positive_int, default=10, help="interior knots per covariate")
    c.add_argument("--aug-out", help="write the augmented PSA CSV here")

    c = sub.add_parser("evsi", parents=[common, seeded, psa_src], help="expected value of sample information")
    c.add_argument("--method", choices=("rb", "is", "ga", "mm", "oracle"), required=True,
                   help="regression, importance sampling, Gaussian approximation, moment matching or nested MC")
    c.add_argument("--n", type=_int_list, help="comma-separated study sizes (default: n_list or n)")
    c.add_argument("--knots", type=_positive_int, default=10, help="interior knots per covariate")
    c.add_argument("--q", type=int, default=31, help="moment-matching quantile points, 30 < Q < 50")
    c.add_argument("--outer", type=_positive_int, default=1000, help="oracle outer samples")
    c.add_argument("--inner", type=_positive_int, default=1000, help="oracle inner samples")
    c.add_argument("--n0", type=_n0_pairs, help="GA prior effective sample sizes as name=value,...")
    c.add_argument("--ga-scaling", choices=("sqrt", "linear"), default="sqrt",
                   help="GA shrinkage weight: sqrt(N/(N+n0)) (default) or N/(N+n0)")

    c = sub.add_parser("ess", parents=[common, seeded, psa_src], help="prior effective sample size")
    c.add_argument("--method", choices=("direct", "summary", "posterior-mean"), required=True,
                   help="prior hyperparameters, simulated summaries or simulated posterior means")
    c.add_argument("--phi", type=_names, help="parameters (default: the design's)")
    c.add_argument("--pilot-n", type=_positive_int, default=50, help="pilot study size for simulation")

    c = sub.add_parser("enbs", parents=[common, psa_src], help="ENBS and optimal sample size")
    c.add_argument("--seed", type=_non_negative_int, help="random seed (required unless --evsi is given)")
    c.add_argument("--method", choices=("rb", "is", "ga", "mm", "oracle"), default="ga",
                   help="EVSI method when computing EVSI (default: ga)")
    c.add_argument("--n", type=_int_list, help="comma-separated study sizes")
    c.add_argument("--evsi", help="read per-person EVSI from a method,N,evsi,se CSV instead")
    c.add_argument("--incidence", type=float, help="people affected per year")
    c.add_argument("--horizon", type=_positive_int, help="years the decision applies")
    c.add_argument("--discount", type=float, help="annual discount rate")
    c.add_argument("--fixed-cost", type=float, help="fixed study cost")
    c.add_argument("--per-participant-cost", type=float, help="study cost per participant")
    c.add_argument("--knots", type=_positive_int, default=10, help="interior knots per covariate")
    c.add_argument("--q", type=int, default=31, help="moment-matching quantile points")
    c.add_argument("--outer", type=_positive_int, default=1000, help="oracle outer samples")
    c.add_argument("--inner", type=_positive_int, default=1000, help="oracle inner samples")
    c.add_argument("--n0", type=_n0_pairs, help="GA prior effective sample sizes as name=value,...")

    c = sub.add_parser("curves", parents=[common, psa_src], help="CEAC, CEAF and expected loss curves")
    c.add_argument("--seed", type=_non_negative_int, help="seed when generating the PSA")
    c.add_argument("--lambdas", type=_float_list, required=True, help="comma-separated increasing thresholds")
    return p


# ------------------------------------------------------------------ plumbing

def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _need(value, what):
    if value is None:
        raise UsageError(f"{what} is required")
    return value


def _lambda(args, cfg):
    lam = getattr(args, "lam", None)
    lam = lam if lam is not None else cfg.lam
    return _need(lam, "a threshold (--lambda or 'lambda' in the config)")


def _psa(args, cfg):
    if getattr(args, "psa", None):
        if getattr(args, "samples", None):
            raise UsageError("give either --psa or --samples, not both")
        labels = [s.label for s in cfg.model.strategies] if cfg.model else None
        try:
            data = Path(args.psa).read_bytes()
        except OSError as exc:
            raise DataError(f"cannot read {args.psa}: {exc.strerror}") from None
        ds = load_psa_dataset(data, labels=labels)
        return ds.base if hasattr(ds, "base") else ds
    model = _need(cfg.model, "a PSA file (--psa) or a model (--config with 'model')")
    if getattr(args, "seed", None) is None:
        raise UsageError("--seed is required to generate a PSA")
    s = args.samples or cfg.psa_samples or 1000
    return run_psa(model, s, args.seed)


def _emit(args, text: str | bytes):
    data = text.encode("utf-8") if isinstance(text, str) else text
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _records(args, records: list[dict], csv_header: list[str]) -> str:
    if args.format == "json":
        return json.dumps(_jsonable(records), indent=2, sort_keys=True) + "\n"
    lines = [",".join(csv_header)]
    for r in records:
        lines.append(",".join("" if r.get(k) is None else (repr(float(r[k])) if isinstance(r[k], float) else str(r[k]))
                              for k in csv_header))
    return "\n".join(lines) + "\n"


def _design(cfg, n=None):
    d = _need(cfg.design, "a study design ('outcome.*' or a built-in model in --config)")
    return d if n is None else d.with_sample_size(n)


def _n_values(args, cfg):
    if getattr(args, "n", None):
        return args.n
    if cfg.n_list:
        return list(cfg.n_list)
    return [_design(cfg).sample_size]


def _n0_for(args, cfg, design, ds, seed):
    given = dict(cfg.n0)
    given.update(getattr(args, "n0", None) or {})
    out = {}
    for p in design.phi_names:
        if p in given:
            out[p] = given[p]
            continue
        prior = cfg.model.spec(p) if cfg.model else None
        try:
            out[p] = ess_direct_for_design(prior, design).n0 if prior else None
        except (MethodError, DataError):
            out[p] = None
        if out[p] is None:
            out[p] = ess_from_summary(design, ds, p, max(design.sample_size, 50), seed).n0
    return out


def _evsi_list(args, cfg, ds, lam):
    method, ns = args.method, _n_values(args, cfg)
    design = _design(cfg)
    if method == "rb" and design.n_outcomes > MAX_COVARIATES:
        return [evsi_rb(ds, design, lam, args.seed)]  # raises the dimension error
    if method == "ga":
        n0 = _n0_for(args, cfg, design, ds, args.seed)
        return evsi_ga(ds, design, n0, lam, ns, n_knots=args.knots,
                       scaling=getattr(args, "ga_scaling", "sqrt"), seed=args.seed)
    if method == "oracle":
        model = _need(cfg.model, "a model (the oracle re-runs it)")
        return [evsi_oracle(model, design.with_sample_size(n), lam, args.outer, args.inner, args.seed)
                for n in ns]
    if method == "rb":
        return [evsi_rb(ds, design.with_sample_size(n), lam, args.seed, n_knots=args.knots) for n in ns]
    _, aug = estimate_evppi(ds, design.phi_names, lam, seed=args.seed, n_knots=args.knots)
    if method == "is":
        return [evsi_is(aug, design.with_sample_size(n), lam, args.seed) for n in ns]
    model = _need(cfg.model, "a model (moment matching re-runs it)")
    return [evsi_mm(model, aug, design.with_sample_size(n), lam, args.q, args.seed) for n in ns]


# ------------------------------------------------------------------ commands

def cmd_psa(args, cfg):
    model = _need(cfg.model, "a model (--config with 'model')")
    s = args.samples or cfg.psa_samples or 1000
    _emit(args, save_psa_dataset(run_psa(model, s, args.seed)))


def cmd_evpi(args, cfg):
    ds = _psa(args, cfg)
    est = evpi(compute_net_benefit(ds, _lambda(args, cfg)))
    _emit(args, _records(args, [est.to_record()], ["kind", "value", "mc_se"]))


def cmd_evppi(args, cfg):
    ds = _psa(args, cfg)
    phi = args.phi or list(cfg.phi)
    if not phi:
        raise UsageError("--phi is required (or 'phi' / outcomes in the config)")
    est, aug = estimate_evppi(ds, phi, _lambda(args, cfg), seed=args.seed, n_knots=args.knots)
    if args.aug_out:
        Path(args.aug_out).write_bytes(save_psa_dataset(aug))
    _emit(args, _records(args, [est.to_record()], ["kind", "value", "mc_se"]))


def cmd_evsi(args, cfg):
    ds = _psa(args, cfg)
    ests = _evsi_list(args, cfg, ds, _lambda(args, cfg))
    if args.format == "json":
        _emit(args, json.dumps([_jsonable(e.to_record()) for e in ests], indent=2, sort_keys=True) + "\n")
    else:
        _emit(args, evsi_curve_csv(ests))


def cmd_ess(args, cfg):
    ds = _psa(args, cfg)
    design = _design(cfg)
    phi = args.phi or list(design.phi_names)
    out = []
    for p in phi:
        if args.method == "direct":
            prior = _need(cfg.model, "a model with priors").spec(p)
            est = ess_direct_for_design(prior, design)
        elif args.method == "summary":
            est = ess_from_summary(design, ds, p, args.pilot_n, args.seed)
        else:
            prior = cfg.model.spec(p) if cfg.model else None
            est = ess_from_posterior_means(design, ds, p, args.pilot_n, args.seed, prior=prior)
        out.append(est.to_record())
    _emit(args, _records(args, out, ["parameter", "method", "n0"]))


def _read_evsi_csv(path):
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if not lines or lines[0].strip() != "method,N,evsi,se":
        raise DataError(f"{path}: expected a 'method,N,evsi,se' header")
    out = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        try:
            out.append((int(parts[1]), float(parts[2])))
        except (IndexError, ValueError):
            raise DataError(f"{path}: bad row {i}") from None
    return out


def cmd_enbs(args, cfg):
    pop = cfg.population
    if args.incidence is not None or args.horizon is not None or args.discount is not None:
        base = pop or PopulationSpec(0.0, 1, 0.0)
        pop = PopulationSpec(args.incidence if args.incidence is not None else base.incidence,
                             args.horizon if args.horizon is not None else base.horizon,
                             args.discount if args.discount is not None else base.discount_rate)
    pop = _need(pop, "population inputs (--incidence/--horizon or population.* in the config)")
    cost = cfg.cost or CostModel()
    if args.fixed_cost is not None or args.per_participant_cost is not None:
        cost = CostModel(args.fixed_cost if args.fixed_cost is not None else cost.fixed,
                         args.per_participant_cost if args.per_participant_cost is not None
                         else cost.per_participant)
    if args.evsi:
        pairs = _read_evsi_csv(args.evsi)
    else:
        if args.seed is None:
            raise UsageError("--seed is required unless --evsi is given")
        ds = _psa(args, cfg)
        pairs = [(e.design_N, e) for e in _evsi_list(args, cfg, ds, _lambda(args, cfg))]
    curve = enbs_curve(pairs, pop, cost)
    _emit(args, curve.to_json() if args.format == "json" else curve.to_csv())
    if curve.flag:
        print(f"note: {curve.flag} (maximum ENBS {curve.max_enbs:.2f})", file=sys.stderr)


def cmd_curves(args, cfg):
    ds = _psa(args, cfg)
    curves = decision_uncertainty_curves(ds, args.lambdas)
    if args.format == "json":
        body = {"lambda": curves.thresholds, "ceac": curves.ceac, "ceaf": curves.ceaf, "elc": curves.elc}
        _emit(args, json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
    else:
        _emit(args, curves.to_csv())


COMMANDS = {"psa": cmd_psa, "evpi": cmd_evpi, "evppi": cmd_evppi, "evsi": cmd_evsi, "ess": cmd_ess,
            "enbs": cmd_enbs, "curves": cmd_curves}


def _fail(kind: str, message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
        return code
    set_default_threads(args.threads or os.cpu_count() or 1)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            COMMANDS[args.command](args, _config(args))
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return EXIT_OK
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail("UsageError", str(exc), EXIT_USAGE)
    except DataError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_DATA)
    except MethodError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_METHOD)
    except VoiError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_METHOD)
    except ValueError as exc:
        return _fail("DataError", str(exc), EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
