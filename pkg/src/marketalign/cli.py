"""Command line entry point.

Exit codes: 0 success, 1 usage or input error, 2 a check ran and failed
(profile not an equilibrium, certificate radii exceeded).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import check_strong, check_weak, cert_from_dict, fit_strong_set, save_cert, StrongAlignmentCert
from .constructions import (
    CONSTRUCTIONS,
    make_full_revelation_rule,
    make_public_example,
    public_example_weak_cert,
    strict_separation_weak_cert,
)
from .empirical import (
    FitReport,
    REPORT_SCHEMA_VERSION,
    baselines,
    fit_strong_provider,
    fit_weak_user,
    load_dataset,
    subset_analysis,
    transfer_curve,
    user_count_tradeoff,
    weak_curve,
)
from .empirical.fitting import transfer_factors
from .equilibrium import theoretical_bounds, verify_anonymous_NE, verify_personalized_NE
from .errors import MarketAlignError
from .game import SCHEMA_VERSION, GameInstance, ProviderRule, constant_rule
from .garbling import GarblingSpec, identical_features_garbling, trivial_garbling

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_ERROR)


def _emit(doc: dict, out: str | None):
    text = json.dumps(doc, indent=1, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _int_list(text: str | None):
    if text is None:
        return None
    return [int(t) for t in text.split(",") if t.strip()]


# game commands ------------------------------------------------------------------------


def cmd_construct(args):
    if args.name == "public-example":
        inst = make_public_example(args.eps, args.c, args.M, args.D)
        cert = public_example_weak_cert(inst, args.eps, args.c)
    else:
        inst = CONSTRUCTIONS[args.name]()
        cert = strict_separation_weak_cert(inst) if args.name == "strict-separation" else None
    inst.save(args.output)
    if args.cert_out and cert is not None:
        save_cert(cert, args.cert_out)
    print(f"wrote {args.output} ({inst.name})")
    return EXIT_OK


def _load_garbling(inst, spec, providers):
    if spec in (None, "identical"):
        return identical_features_garbling(inst, providers)
    if spec == "trivial":
        return trivial_garbling(inst, providers)
    return GarblingSpec.load(spec)


def _load_profile(inst, spec, mode):
    k, n = inst.n_providers, inst.n_users
    if spec == "no-disclosure":
        rules = [constant_rule(inst, j) for j in range(k)]
    elif spec == "full-revelation":
        rules = [make_full_revelation_rule(inst, j) for j in range(k)]
    else:
        doc = json.loads(Path(spec).read_text())
        rules = doc["rules"] if isinstance(doc, dict) else doc
        if mode == "personalized":
            return [[ProviderRule.from_dict(r) for r in row] for row in rules]
        return [ProviderRule.from_dict(r) for r in rules]
    if mode == "personalized":
        return [[r] * n for r in rules]
    return rules


def cmd_verify(args):
    inst = GameInstance.load(args.instance)
    profile = _load_profile(inst, args.profile, args.mode)
    garbling = None
    if args.deviation_class == "shared":
        garbling = _load_garbling(inst, args.garbling, range(inst.n_providers))
    check = verify_personalized_NE if args.mode == "personalized" else verify_anonymous_NE
    report = check(inst, profile, args.deviation_class, eps=args.eps, garbling=garbling, cap=args.cap)
    _emit(report.to_dict(), args.out)
    if not report.is_eps_ne:
        sys.stderr.write(f"not an equilibrium: max gain {max(report.max_gain):.6g} > {args.eps:g}\n")
        return EXIT_FAILED
    return EXIT_OK


def cmd_cert(args):
    inst = GameInstance.load(args.instance)
    if args.action == "check":
        cert = cert_from_dict(json.loads(Path(args.cert).read_text()))
        cert.validate()
        if isinstance(cert, StrongAlignmentCert):
            eps = check_strong(inst, cert, args.cap)
            ok = eps <= cert.eps + args.tol
            doc = {"type": "strong", "achieved_eps": eps, "claimed_eps": cert.eps, "passed": ok}
        else:
            ep, eu = check_weak(inst, cert, args.cap)
            ok = ep <= cert.eps_P + args.tol and eu <= cert.eps_U + args.tol
            doc = {"type": "weak", "achieved_eps_P": ep, "achieved_eps_U": eu,
                   "claimed_eps_P": cert.eps_P, "claimed_eps_U": cert.eps_U, "passed": ok}
        _emit(doc, args.out)
        return EXIT_OK if ok else EXIT_FAILED
    providers = _int_list(args.providers) or list(range(inst.n_providers))
    cert = fit_strong_set(inst, providers, _int_list(args.users), args.cap)
    doc = cert.to_dict()
    _emit(doc, args.out)
    return EXIT_OK


def cmd_bounds(args):
    inst = GameInstance.load(args.instance)
    cert = cert_from_dict(json.loads(Path(args.cert).read_text()))
    garbling = _load_garbling(inst, args.garbling, cert.providers)
    rep = theoretical_bounds(inst, cert, args.mode, garbling, cap=args.cap)
    _emit(rep.to_dict(), args.out)
    return EXIT_OK


# empirical commands ---------------------------------------------------------------------


def _dataset(args):
    ds = load_dataset(args.group_file, args.model_file, args.partition)
    return ds.subset(_int_list(args.groups), _int_list(args.providers))


def _config(args, ds):
    keys = ("score", "folds", "seed", "samples", "K", "sizes", "user_counts")
    cfg = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    cfg.update(partition=ds.partition, groups=ds.group_labels, providers=ds.model_labels)
    return cfg


def _finish(report: FitReport, args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out)
    (out / report.csv_name().replace(".csv", ".json")).write_text(report.to_json() + "\n")
    print(report.to_json())
    return EXIT_OK


def cmd_fit_weak(args):
    ds = _dataset(args)
    fits = [fit_weak_user(ds, i, None, args.score, args.folds, args.seed) for i in range(ds.n_groups)]
    rows = [{"group": ds.group_labels[f.user], "epsilon_proxy_rmse": f.mean_test_rmse,
             "epsilon_proxy_rmse_se": f.se_test_rmse, "in_sample_rmse": f.in_sample_rmse,
             "intercept": f.intercept, "weights": f.weights.tolist()} for f in fits]
    return _finish(FitReport("fit-weak", _config(args, ds), rows, weak=[f.to_dict() for f in fits]), args)


def cmd_fit_strong(args):
    ds = _dataset(args)
    fits = [fit_strong_provider(ds, j, None, args.score, args.samples, args.folds, args.seed) for j in range(ds.n_models)]
    lam = np.vstack([f.lam for f in fits])
    rows = [{"provider": ds.model_labels[f.provider], "epsilon_proxy_rmse": f.mean_test_rmse,
             "in_sample_rmse": f.in_sample_rmse, "intercept": f.intercept, "lambda": f.lam.tolist()} for f in fits]
    rep = FitReport("fit-strong", _config(args, ds), rows, strong=[f.to_dict() for f in fits], lambda_table=lam.tolist())
    return _finish(rep, args)


def cmd_transfer(args):
    ds = _dataset(args)
    rows, fits = transfer_curve(ds, args.score, _int_list(args.K), args.seed, args.samples)
    lam = np.vstack([f.lam for f in fits])
    rep = FitReport("transfer", _config(args, ds), rows, strong=[f.to_dict() for f in fits], lambda_table=lam.tolist())
    return _finish(rep, args)


def cmd_subsets(args):
    ds = _dataset(args)
    rows, fits = subset_analysis(ds, args.score, _int_list(args.sizes), args.seed, args.samples)
    lam = np.vstack([f.lam for f in fits])
    rep = FitReport("subsets", _config(args, ds), rows, strong=[f.to_dict() for f in fits], lambda_table=lam.tolist())
    return _finish(rep, args)


def cmd_tradeoff(args):
    ds = _dataset(args)
    rows, _ = user_count_tradeoff(ds, args.score, _int_list(args.user_counts), args.seed, args.samples, folds=args.folds)
    return _finish(FitReport("tradeoff", _config(args, ds), rows), args)


def cmd_baselines(args):
    ds = _dataset(args)
    rows = []
    for i in range(ds.n_groups):
        single, equal = baselines(ds, i, args.score)
        fit = fit_weak_user(ds, i, None, args.score, args.folds, args.seed)
        rows.append({"group": ds.group_labels[i], "best_single_rmse": single, "equal_weight_rmse": equal,
                     "nnls_in_sample_rmse": fit.in_sample_rmse})
    return _finish(FitReport("baselines", _config(args, ds), rows), args)


# parser ----------------------------------------------------------------------------------


def _data_args(p, samples=False, folds=True):
    p.add_argument("--group-file", required=True, help="long-format CSV of group answer distributions")
    p.add_argument("--model-file", required=True, help="long-format CSV of model answer distributions")
    p.add_argument("--partition", help="partition name used in output file names (default: group file stem)")
    p.add_argument("--score", choices=("linear", "log", "brier"), default="linear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--groups", help="comma-separated group indices to keep")
    p.add_argument("--providers", help="comma-separated model indices to keep")
    p.add_argument("--out", default=".", help="output directory for the CSV and JSON report")
    if folds:
        p.add_argument("--folds", type=int, default=5)
    if samples:
        p.add_argument("--samples", type=int, default=64, help="sampled profiles per question")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="marketalign", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version", action="version",
        version=f"marketalign {__version__} (game-instance schema {SCHEMA_VERSION}, report schema {REPORT_SCHEMA_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("construct", help="write one of the built-in instances as JSON")
    p.add_argument("name", choices=sorted(CONSTRUCTIONS))
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--M", type=int, default=6)
    p.add_argument("--D", type=float, default=2.0)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--cert-out", help="also write the instance's natural weak certificate")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("verify", help="check a profile against all deviations in a class")
    p.add_argument("--instance", required=True)
    p.add_argument("--profile", required=True, help="no-disclosure, full-revelation, or a JSON profile file")
    p.add_argument("--class", dest="deviation_class", default="det", choices=("det", "deterministic", "shared"))
    p.add_argument("--mode", choices=("anonymous", "personalized"), default="anonymous")
    p.add_argument("--garbling", help="identical (default), trivial, or a garbling JSON file")
    p.add_argument("--eps", type=float, default=1e-9)
    p.add_argument("--cap", type=int, default=10**7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("cert", help="check or fit alignment certificates")
    p.add_argument("action", choices=("check", "fit"))
    p.add_argument("--instance", required=True)
    p.add_argument("--cert", help="certificate JSON (check)")
    p.add_argument("--providers", help="comma-separated providers (fit)")
    p.add_argument("--users", help="comma-separated users (fit)")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--cap", type=int, default=10**7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cert)

    p = sub.add_parser("bounds", help="per-user lower bounds implied by a certificate")
    p.add_argument("--instance", required=True)
    p.add_argument("--cert", required=True)
    p.add_argument("--mode", required=True, choices=("personalized", "augmented", "anonymous-dominant", "anonymous-general"))
    p.add_argument("--garbling")
    p.add_argument("--cap", type=int, default=10**7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    for name, func, samples, extra in (
        ("fit-weak", cmd_fit_weak, False, None),
        ("fit-strong", cmd_fit_strong, True, None),
        ("transfer", cmd_transfer, True, "K"),
        ("subsets", cmd_subsets, True, "sizes"),
        ("tradeoff", cmd_tradeoff, True, "user_counts"),
        ("baselines", cmd_baselines, False, None),
    ):
        p = sub.add_parser(name, help=f"{name} on survey data")
        _data_args(p, samples=samples)
        if extra:
            p.add_argument("--" + extra.replace("_", "-"), dest=extra, help="comma-separated values")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MarketAlignError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
