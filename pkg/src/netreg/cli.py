"""Command-line interface: ``netreg fit | test-network-effect | select-r |
simulate | concentration``.

Exit codes: 0 success, 2 input error, 3 numerical failure. Errors are
also written to stderr as one JSON object.
"""

import argparse
import datetime
import json
import os
import sys
import warnings

import numpy as np

from .estimator import FitConfig, fit, model_guard_fit
from .exceptions import InputError, NumericalError
from .io import build_fit_report, read_dataset
from .network import average_degree, network_estimate
from .rank import select_r_bootstrap, select_r_threshold
from .simulation import (
    ScenarioConfig,
    run_comparison_experiment,
    run_concentration_check,
    run_inference_experiment,
)
from .spectral import alignment_svd, orthonormal_basis

PHAT_CHOICES = ("adjacency", "laplacian", "sbm", "dcbm", "sbm-laplacian", "dcbm-laplacian")

# preset -> (experiment, network, effects, methods, reps)
SCENARIOS = {
    "table2": ("inference", "sbm", "eigenspace", ("SP", "SP-SBM"), 50),
    "table3": ("inference", "sbm", "eigenspace", ("SP", "SP-SBM"), 500),
    "table4": ("inference", "sbm", "zero_gamma", ("SP", "SP-SBM"), 500),
    "table5": ("inference", "dcbm", "eigenspace", ("SP", "SP-DCBM"), 50),
    "table6": ("inference", "dcbm", "eigenspace", ("SP", "SP-DCBM"), 500),
    "table6-null": ("inference", "dcbm", "zero_gamma", ("SP", "SP-DCBM"), 500),
    "table7": ("comparison", "sbm", "eigenspace",
               ("SP", "SP-SBM", "OLS", "SIM", "RNC", "SP-L", "SP-SBM-L"), 50),
    "table8": ("comparison", "dcbm", "eigenspace",
               ("SP", "SP-DCBM", "OLS", "SIM", "RNC", "SP-L", "SP-DCBM-L"), 50),
}
DENSITY_FLAGS = {"2logn": "two_log_n", "sqrt": "sqrt_n", "n23": "n_two_thirds"}


def _fmt(x):
    if x is None:
        return "nan"
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.6g}"


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NETREG_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise InputError(f"NETREG_SEED must be an integer, got {env!r}") from exc


def _write_json(payload, args):
    if not args.no_timestamp:
        payload = {**payload,
                   "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return text


def _parse_r(value):
    if value in ("auto-bootstrap", "bootstrap"):
        return "bootstrap"
    if value in ("auto-threshold", "threshold"):
        return "threshold"
    try:
        return int(value)
    except ValueError as exc:
        raise InputError(f"--r must be auto-bootstrap, auto-threshold or an integer") from exc


def _parse_reference(items):
    ref = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"--reference expects COLUMN=LEVEL, got {item!r}")
        col, lev = item.split("=", 1)
        ref[col] = lev
    return ref


def _parse_merge(items):
    merge = {}
    for item in items or []:
        try:
            col, rest = item.split(":", 1)
            src, dst = rest.split("=", 1)
        except ValueError as exc:
            raise InputError(f"--merge expects COLUMN:LEVEL=NEWLEVEL, got {item!r}") from exc
        merge.setdefault(col, {})[src] = dst
    return merge


def _load(args):
    if args.phat in ("sbm", "dcbm", "sbm-laplacian", "dcbm-laplacian") and not args.communities:
        raise InputError(f"--phat {args.phat} requires --communities")
    columns = args.columns.split(",") if args.columns else None
    data = read_dataset(args.network, args.covariates, args.response, args.communities,
                        columns=columns, reference=_parse_reference(args.reference),
                        level_map=_parse_merge(args.merge),
                        indexing="zero" if args.zero_indexed else "one",
                        weighted=args.weighted)
    P_hat = network_estimate(data.A, args.phat, data.communities)
    return data, P_hat


def _do_fit(args):
    data, P_hat = _load(args)
    config = FitConfig(K=args.k, r=_parse_r(args.r), alpha_level=args.alpha,
                       chisq_df_mode=args.chisq_df, n_bootstrap=args.n_bootstrap,
                       seed=_seed(args))
    runner = model_guard_fit if args.guard else fit
    result = runner(data.X, data.Y, P_hat, config)
    report = build_fit_report(result, data.names, data.scale, level=args.alpha,
                              source=args.phat, avg_degree=average_degree(data.A))
    report.diagnostics["edges"] = {"n_edges": data.edge_info.n_edges,
                                   "duplicates": data.edge_info.duplicates,
                                   "self_loops": data.edge_info.self_loops}
    return report


def cmd_fit(args):
    report = _do_fit(args)
    _write_json(report.to_dict(), args)
    print(f"{'name':<20}{'theta':>12}{'beta':>12}{'se':>12}{'z':>12}{'p':>12}")
    for row in report.coefficients:
        print(f"{row['name']:<20}" + "".join(
            f"{_fmt(row[k]):>12}" for k in ("theta", "beta", "se", "z", "p")))
    ne = report.network_effect
    print(f"network effect: chisq={_fmt(ne['chisq'])} df={ne['df']} p={_fmt(ne['p'])}")
    print(f"sigma2={_fmt(report.sigma2)} r={report.r} K={report.K}")
    return 0


def cmd_test(args):
    report = _do_fit(args)
    _write_json(report.to_dict(), args)
    ne = report.network_effect
    print(f"chisq={_fmt(ne['chisq'])} df={ne['df']} p={_fmt(ne['p'])}")
    return 0


def cmd_select_r(args):
    data, P_hat = _load(args)
    Z = orthonormal_basis(data.X)
    sigma = alignment_svd(Z, P_hat.eigenvectors(args.k)).sigma_hat
    n, p = data.X.shape
    if args.method == "threshold":
        report = select_r_threshold(sigma, average_degree(data.A), p, args.k, n)
    else:
        report = select_r_bootstrap(data.A, Z, args.k, B=args.n_bootstrap, seed=_seed(args),
                                    sigma_hat=sigma, kind=P_hat.source,
                                    communities=data.communities)
    _write_json(report.to_dict(), args)
    print(f"r_hat={report.r_hat} threshold={_fmt(report.threshold)} method={report.method}")
    return 0


def _emit_experiment(report, args):
    payload = report.to_dict()
    if args.no_timestamp:
        payload["wall_time"] = None
    if args.out:
        base = args.out[:-5] if args.out.endswith(".json") else args.out
        with open(base + ".csv", "w") as fh:
            fh.write(report.to_csv())
        args.out = base + ".json"
    _write_json(payload, args)
    sys.stdout.write(report.to_csv())


def cmd_simulate(args):
    experiment, network, effects, methods, reps = SCENARIOS[args.scenario]
    if args.effects:
        effects = args.effects
    if args.methods:
        methods = tuple(args.methods.split(","))
    if args.reps is not None:
        reps = args.reps
    n = args.n
    if args.fast:
        reps = max(1, reps // 4)
        n = min(n, 1000)
    density = DENSITY_FLAGS.get(args.density, args.density)
    try:
        density = float(density)
    except ValueError:
        pass
    config = ScenarioConfig(
        n=n, network=network, density=density,
        design="eigenspace" if experiment == "inference" else "random_covariates",
        effects=effects, reps=reps, seed=_seed(args), methods=methods,
        r="known" if args.r == "known" else _parse_r(args.r),
        effect_scale=args.effect_scale, noise_sigma2=args.noise_sigma2)
    runner = run_inference_experiment if experiment == "inference" else run_comparison_experiment
    report = runner(config, n_jobs=args.threads)
    _emit_experiment(report, args)
    return 0


def cmd_concentration(args):
    density = DENSITY_FLAGS.get(args.density, args.density)
    try:
        density = float(density)
    except ValueError:
        pass
    report = run_concentration_check(args.n, args.k, density, args.reps, _seed(args),
                                     n_jobs=args.threads)
    _emit_experiment(report, args)
    return 0


def _add_common(p):
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (falls back to $NETREG_SEED, then 0)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--no-timestamp", action="store_true")


def _add_data(p):
    p.add_argument("--network", required=True, help="edge list 'i j [w]'")
    p.add_argument("--covariates", required=True, help="CSV with a header, one row per node")
    p.add_argument("--response", required=True)
    p.add_argument("--columns", default=None, help="comma-separated covariate columns")
    p.add_argument("--reference", action="append", metavar="COL=LEVEL",
                   help="reference level of a categorical column")
    p.add_argument("--merge", action="append", metavar="COL:LEVEL=NEW",
                   help="relabel a categorical level before dummy coding")
    p.add_argument("--communities", default=None, help="1-based labels, one per line")
    p.add_argument("--phat", choices=PHAT_CHOICES, default="adjacency")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--zero-indexed", action="store_true")
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--n-bootstrap", type=int, default=50)


def build_parser():
    parser = argparse.ArgumentParser(prog="netreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, helptext in (("fit", cmd_fit, "fit the model and write a report"),
                                 ("test-network-effect", cmd_test,
                                  "chi-squared test of no network effect")):
        p = sub.add_parser(name, help=helptext)
        _add_data(p)
        _add_common(p)
        p.add_argument("--r", default="auto-bootstrap")
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--chisq-df", choices=("dim_gamma", "paper_K"), default="dim_gamma")
        p.add_argument("--guard", action="store_true",
                       help="fall back to OLS when the network effect is not significant")
        p.set_defaults(func=func)

    p = sub.add_parser("select-r", help="choose the intersection dimension")
    _add_data(p)
    _add_common(p)
    p.add_argument("--method", choices=("bootstrap", "threshold"), default="bootstrap")
    p.set_defaults(func=cmd_select_r)

    p = sub.add_parser("simulate", help="run a simulation cell")
    _add_common(p)
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="table2")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--density", default="sqrt", help="2logn, sqrt, n23 or a number")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--effects", choices=("eigenspace", "zero_gamma", "smooth"), default=None)
    p.add_argument("--methods", default=None, help="comma-separated method names")
    p.add_argument("--r", default="known")
    p.add_argument("--effect-scale", type=float, default=None)
    p.add_argument("--noise-sigma2", type=float, default=1.0)
    p.add_argument("--fast", action="store_true", help="quarter the reps, cap n at 1000")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("concentration", help="projection concentration check")
    _add_common(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--density", default="n23")
    p.add_argument("--reps", type=int, default=100)
    p.set_defaults(func=cmd_concentration)
    return parser


def _fail(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except NumericalError as exc:
        return _fail(exc, 3)
    except (InputError, OSError, ValueError, KeyError) as exc:
        return _fail(exc, 2)


if __name__ == "__main__":
    sys.exit(main())
