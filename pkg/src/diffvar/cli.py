"""``diffvar`` command-line interface: ``analyze`` a CSV or ``simulate`` a study."""

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import simulation as sim
from .dataset import DataError, DegenerateDesignError, DegenerateOutcomeError, load_csv
from .eif import DegenerateVarianceError
from .estimators import TiltError, estimate_contrast
from .nuisance import NuisanceConfig, NuisanceError
from .plotting import line_chart

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_NUMERIC = 0, 2, 3, 4

METHOD_LABELS = {"OS": "One-Step", "TMLE": "TMLE", "CFOS": "CF One-Step", "CFTMLE": "CF TMLE"}
ESTIMAND_FLAGS = {"abs": "psi", "rel": "lambda"}
TABLE_HEADER = ("Estimator", "Estimate", "Standard Error", "95% Confidence Interval", "P-Value")

log = logging.getLogger("diffvar")


class ConfigError(ValueError):
    pass


def read_config_file(path):
    """Parse ``key = value`` lines (``#`` comments) into a dict keyed like argparse dests."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v.strip('"').strip("'")
    return out


def format_table(rows, label=None, digits=3, alpha=0.05):
    """Pipe table with the columns Estimator | Estimate | SE | CI | P-Value."""
    level = f"{100 * (1 - alpha):g}% Confidence Interval"
    header = list(TABLE_HEADER)
    header[3] = level
    if label is not None:
        header.insert(0, "Data")
    lines = ["| " + " | ".join(header) + " |"]
    for r in rows:
        cells = [r["estimator"], f"{r['estimate']:.{digits}f}", f"{r['se']:.{digits}f}",
                 f"({r['ci_low']:.{digits}f}, {r['ci_high']:.{digits}f})", f"{r['p_value']:.3f}"]
        if label is not None:
            cells.insert(0, label)
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def _report_row(rep):
    return {"estimator": METHOD_LABELS[rep.method], "estimate": rep.estimate, "se": rep.se,
            "ci_low": rep.ci_low, "ci_high": rep.ci_high, "p_value": rep.p_value}


def cmd_analyze(args):
    covs = [c.strip() for c in args.covariates.split(",") if c.strip()] if args.covariates else []
    estimand = ESTIMAND_FLAGS.get(args.estimand)
    if estimand is None:
        raise ConfigError(f"--estimand must be abs or rel, got {args.estimand!r}")
    method = args.method.upper()
    if method not in METHOD_LABELS:
        raise ConfigError(f"--method must be one of os, tmle, cfos, cftmle, got {args.method!r}")
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    if method.startswith("CF") and args.k < 2:
        raise ConfigError("--k must be at least 2 for cross-fitted methods")
    cfg = NuisanceConfig(args.propensity, args.qbar, args.qbar2, clip_g=args.clip_g)
    d = load_csv(args.data, args.outcome, args.treatment, covs)
    rep = estimate_contrast(d, cfg, method, estimand, args.alpha, args.k, args.seed,
                            weighted=args.weighted_tmle)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(rep.to_json(indent=2) + "\n", encoding="utf-8")
    what = "sd(Y(1)) - sd(Y(0))" if estimand == "psi" else "var(Y(1)) / var(Y(0))"
    print(f"estimand: {what}  (n = {d.n}, null = {rep.null:g})")
    if cfg.known_propensity:
        print(f"propensity: known ({cfg.describe()['propensity']}), not estimated")
    print(format_table([_report_row(rep)], args.label, args.digits, args.alpha))
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK


METRICS = {
    "abs_bias": "Absolute empirical bias",
    "emp_variance": "Empirical variance",
    "scaled_abs_bias": "Scaled absolute empirical bias",
    "coverage": "Empirical coverage",
    "power": "Empirical power",
}


def _reference(metric, row, alpha):
    if metric == "coverage":
        return 1.0 - alpha
    if metric == "power":
        null = 1.0 if row["estimand"] == "lambda" else 0.0
        return alpha if math.isclose(row["truth"], null, abs_tol=1e-12) else 1.0
    return 0.0


def write_plots(rows, out, alpha):
    paths = []
    for scen in dict.fromkeys(r["scenario"] for r in rows):
        sub = [r for r in rows if r["scenario"] == scen]
        for metric, title in METRICS.items():
            series = {}
            for r in sub:
                xs, ys = series.setdefault(METHOD_LABELS.get(r["estimator"], r["estimator"]), ([], []))
                xs.append(r["n"])
                ys.append(r[metric])
            svg = line_chart(series, f"{title} ({scen})", "n", title,
                             _reference(metric, sub[0], alpha))
            p = out / f"{metric}_{scen}.svg"
            p.write_text(svg, encoding="utf-8")
            paths.append(p)
    return paths


def _int_list(s):
    return [int(x) for x in str(s).split(",") if x.strip()]


def cmd_simulate(args):
    if args.study not in (1, 2, 3):
        raise ConfigError(f"--study must be 1, 2 or 3, got {args.study}")
    if not 0.0 <= args.m <= 1.0:
        raise ConfigError("--m must lie in [0, 1]")
    ns = _int_list(args.ns) if args.ns else list(sim.FULL_NS if args.full else sim.DESK_NS)
    reps = args.reps if args.reps is not None else (sim.FULL_REPS if args.full else sim.DESK_REPS)
    if reps < 1:
        raise ConfigError("--reps must be at least 1")
    estimators = [e.strip().upper() for e in args.estimators.split(",")]
    scen = args.scenario.split(",") if args.scenario else None
    summary = sim.run_study(args.study, estimators, ns, reps, scen, args.m, args.seed,
                            args.threads, args.k, args.alpha, progress=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sim.write_csv(out / "summary.csv", summary.rows, sim.SUMMARY_FIELDS)
    sim.write_csv(out / "raw.csv", summary.raw, sim.RAW_FIELDS)
    plots = write_plots(summary.rows, out, args.alpha)
    print(f"{'scenario':<18} {'estimator':<8} {'n':>6} {'abs_bias':>9} {'variance':>9} "
          f"{'coverage':>8} {'power':>6} {'fail':>5}")
    for r in summary.rows:
        print(f"{r['scenario']:<18} {r['estimator']:<8} {r['n']:>6} {r['abs_bias']:>9.4f} "
              f"{r['emp_variance']:>9.4f} {r['coverage']:>8.3f} {r['power']:>6.3f} "
              f"{r['n_failures']:>5}")
    print(f"wrote {out / 'summary.csv'}, {out / 'raw.csv'} and {len(plots)} plots")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="diffvar",
                                description="Differential variance inference for treatment effect heterogeneity.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate a variance contrast from a CSV file")
    a.add_argument("--config", help="key = value file; command-line flags take precedence")
    a.add_argument("--data")
    a.add_argument("--outcome")
    a.add_argument("--treatment")
    a.add_argument("--covariates", default="")
    a.add_argument("--estimand", default="abs", help="abs (sd difference) or rel (variance ratio)")
    a.add_argument("--method", default="tmle", help="os, tmle, cfos or cftmle")
    a.add_argument("--k", type=int, default=5)
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--propensity", default="logit", help="learner spec or known:<p>")
    a.add_argument("--qbar", default="ols", help="learner spec for E[Y | W, A=a]")
    a.add_argument("--qbar2", default="ols", help="learner spec for E[Y^2 | W, A=a]")
    a.add_argument("--clip-g", type=float, default=0.01)
    a.add_argument("--weighted-tmle", action="store_true")
    a.add_argument("--label", default=None, help="data label shown as the first table column")
    a.add_argument("--digits", type=int, default=3)
    a.add_argument("--out", default=".")
    a.set_defaults(func=cmd_analyze, required=("data", "outcome", "treatment"))

    s = sub.add_parser("simulate", help="run a Monte Carlo simulation study")
    s.add_argument("--config")
    s.add_argument("--study", type=int)
    s.add_argument("--scenario", default=None)
    s.add_argument("--m", type=float, default=0.0)
    s.add_argument("--ns", default=None, help="comma-separated sample sizes")
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--estimators", default="os,tmle,cfos,cftmle")
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--full", action="store_true", help="500 replicates at n up to 2000")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="sim_out")
    s.set_defaults(func=cmd_simulate, required=("study",))
    return p, {"analyze": a, "simulate": s}


def parse_args(argv):
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in subs:
        sp = subs[known.command]
        conf = read_config_file(known.config)
        types = {act.dest: act for act in sp._actions}
        defaults = {}
        for k, v in conf.items():
            if k not in types:
                raise ConfigError(f"{known.config}: unknown key {k!r}")
            act = types[k]
            if isinstance(act, argparse._StoreTrueAction):
                defaults[k] = v.lower() in ("1", "true", "yes", "on")
            else:
                defaults[k] = act.type(v) if act.type else v
        sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    missing = [r for r in args.required if getattr(args, r) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + m for m in missing))
    return args


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"diffvar: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose or args.command == "simulate"
                        else logging.WARNING, format="%(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        return args.func(args)
    except (DegenerateVarianceError, DegenerateOutcomeError, DegenerateDesignError) as exc:
        print(f"diffvar: degenerate estimate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataError, ConfigError, ValueError, OSError) as exc:
        print(f"diffvar: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TiltError, NuisanceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"diffvar: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
