"""Command-line entry point: ``activemean {gen-synthetic,run,verify-bounds,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from .data import SyntheticConfig, generate_synthetic, write_csv
from .harness import (ExperimentConfig, aggregate, default_output_dir, emit, read_results_csv,
                      results_from_rows, run_experiment, write_summary_csv)
from .verify import run_checks

logger = logging.getLogger("activemean")


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _names(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    # defaults stay None so that --config values are only overridden by explicit flags
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--dataset", help="'synthetic' or a CSV path")
    p.add_argument("--T", type=int, help="synthetic horizon")
    p.add_argument("--d", type=int, help="synthetic dimension")
    p.add_argument("--label-col", dest="label_col")
    p.add_argument("--feature-cols", dest="feature_cols", type=_names,
                   help="comma-separated feature column names")
    p.add_argument("--pred-col", dest="pred_col")
    p.add_argument("--task", choices=["auto", "linear", "logistic"])
    p.add_argument("--policies", type=_names,
                   help="comma-separated, e.g. uniform,mixture:0.5,ftrl")
    p.add_argument("--budget-fractions", dest="budget_fractions", type=_floats)
    p.add_argument("--budgets", type=_floats, help="absolute label budgets (override fractions)")
    p.add_argument("--trials", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--refit-count", dest="refit_count", type=int)
    p.add_argument("--base-seed", dest="base_seed", type=int)
    p.add_argument("--baseline-fixed-model", dest="baseline_fixed_model", type=_bool)
    p.add_argument("--seed-set-min", dest="seed_set_min", type=int)
    p.add_argument("--phi-cap", dest="phi_cap", type=float)
    p.add_argument("--trigger", type=_bool)
    p.add_argument("--mean-u-mode", dest="mean_u_mode", choices=["current", "history"])
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", dest="out_dir",
                   help="output directory (default: $ACTIVEMEAN_OUTPUT_DIR or ./results)")
    p.add_argument("--name", default="results", help="output file stem")
    p.add_argument("--format", dest="fmt", choices=["csv", "json", "both"], default="csv")


CONFIG_FLAGS = ("dataset", "T", "d", "label_col", "feature_cols", "pred_col", "task", "policies",
                "budget_fractions", "budgets", "trials", "alpha", "refit_count", "base_seed",
                "baseline_fixed_model", "seed_set_min", "phi_cap", "trigger", "mean_u_mode",
                "workers")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    for key in CONFIG_FLAGS:
        val = getattr(args, key)
        if val is not None:
            raw[key] = val
    return ExperimentConfig.from_dict(raw)


def cmd_gen_synthetic(args) -> int:
    ds = generate_synthetic(SyntheticConfig(T=args.T, d=args.d, weight_variance=args.weight_variance,
                                            noise_variance=args.noise_variance, seed=args.seed))
    write_csv(ds, args.out)
    print(f"wrote {ds.T} rows to {args.out} (true mean {ds.true_mean!r})")
    return 0


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    out_dir = args.out_dir or default_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    results = run_experiment(cfg)
    summary = aggregate(results)
    written = []
    if args.fmt in ("csv", "both"):
        written += emit(results, summary, "csv", os.path.join(out_dir, f"{args.name}.csv"), cfg)
    if args.fmt in ("json", "both"):
        written += emit(results, summary, "json", os.path.join(out_dir, f"{args.name}.json"), cfg)
    for row in summary:
        print(f"{row['policy']:>14}  T_b={row['T_b']:<8g} width={row['mean_width']:.5f}  "
              f"coverage={row['coverage']:.2f}  labels={row['mean_labels']:.1f}")
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_verify_bounds(args) -> int:
    report = run_checks(quick=args.quick, seed=args.seed)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0 if report["passed"] else 1


def cmd_report(args) -> int:
    rows = read_results_csv(args.results)
    if not rows:
        print("no results", file=sys.stderr)
        return 1
    summary = aggregate(results_from_rows(rows))
    if args.out:
        write_summary_csv(summary, args.out)
    for row in summary:
        print(f"{row['policy']},{row['T_b']!r},{row['mean_width']!r},{row['coverage']!r},"
              f"{row['mean_labels']!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activemean",
                                     description="Active sequential mean estimation under a label budget.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="write the logistic synthetic dataset as CSV")
    g.add_argument("--T", type=int, default=2000)
    g.add_argument("--d", type=int, default=10)
    g.add_argument("--weight-variance", dest="weight_variance", type=float, default=0.5)
    g.add_argument("--noise-variance", dest="noise_variance", type=float, default=1e-5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synthetic)

    r = sub.add_parser("run", help="sweep policies x budgets x trials")
    _add_run_args(r)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify-bounds", help="simulation checks of the concentration and regret bounds")
    v.add_argument("--quick", action="store_true", help="smaller simulations")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="also write the JSON report here")
    v.set_defaults(func=cmd_verify_bounds)

    rep = sub.add_parser("report", help="summarize a results CSV")
    rep.add_argument("results")
    rep.add_argument("--out", help="write the summary CSV here")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
