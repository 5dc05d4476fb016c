"""Command-line interface: generate instances, run experiments, evaluate bounds, aggregate CSVs."""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bounds import BoundInputs, MixingParams, global_bound
from .harness import (
    ExperimentConfig,
    _build_instance,
    instance_document,
    read_run_csv,
    run_experiment,
    summarize,
    sweep_bounds,
    write_summary_csv,
)


def _floats(text):
    return tuple(float(part) for part in text.split(",") if part)


def _ints(text):
    return tuple(int(part) for part in text.split(",") if part)


def _add_config_overrides(parser):
    parser.add_argument("--config", type=Path, help="JSON experiment config; flags override")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--instances", type=int, help="number of random instances")
    parser.add_argument("--states", type=int, help="states per chain")
    parser.add_argument("--dim", type=int, help="feature dimension")
    parser.add_argument("--gamma", type=float, help="discount factor")
    parser.add_argument("--branching", type=int, help="successors per state")
    parser.add_argument("--eta", type=float, help="uniform-kernel blend weight")
    parser.add_argument("--lambdas", type=_floats, help="comma-separated lambda grid")
    parser.add_argument("--ns", type=_ints, help="comma-separated trajectory checkpoints")
    parser.add_argument("--delta", type=float, help="confidence parameter")
    parser.add_argument("--jobs", type=int, help="worker processes")
    parser.add_argument(
        "--metric", choices=("absolute_mu_norm", "relative_mu_norm"), help="error metric"
    )
    parser.add_argument("--timing", action="store_true", help="record measured wall times")


def _config_from_args(args) -> ExperimentConfig:
    config = (
        ExperimentConfig.from_json(args.config.read_text())
        if args.config
        else ExperimentConfig()
    )
    overrides = {}
    mapping = {
        "seed": "master_seed",
        "instances": "n_instances",
        "states": "n_states",
        "dim": "d",
        "gamma": "gamma",
        "branching": "branching",
        "eta": "eta",
        "lambdas": "lambdas",
        "ns": "n_grid",
        "delta": "delta",
        "jobs": "parallelism",
        "metric": "error_metric",
    }
    for flag, field_name in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field_name] = value
    if getattr(args, "timing", False):
        overrides["timing"] = True
    return replace(config, **overrides) if overrides else config


def _cmd_generate(args) -> int:
    config = _config_from_args(args)
    out_dir = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    for instance_id in range(config.n_instances):
        bundle, attempt = _build_instance(config, instance_id)
        provenance = {
            "master_seed": config.master_seed,
            "instance_id": instance_id,
            "attempt": attempt,
            "branching": config.branching,
            "eta": config.eta,
        }
        doc = instance_document(bundle.mrp, bundle.phi, provenance)
        path = out_dir / f"instance_{instance_id:04d}.json"
        path.write_text(json.dumps(doc))
        print(f"wrote {path}")
    return 0


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    summary_path = args.summary_out or args.out.with_name(args.out.stem + "_summary.csv")
    result = run_experiment(config, out_csv=args.out, summary_csv=summary_path)
    failed = len(result.diagnostics.failed_instances)
    print(f"wrote {len(result.records)} records to {args.out}")
    print(f"wrote {len(result.summary)} summary rows to {summary_path}")
    print(f"instances built: {result.diagnostics.instances_built}, failed: {failed}")
    if result.diagnostics.decomposition_violations or result.diagnostics.structural_violations:
        print(
            f"WARNING: {result.diagnostics.decomposition_violations} decomposition violations, "
            f"{result.diagnostics.structural_violations} structural violations"
        )
        return 1
    return 0


def _cmd_bounds(args) -> int:
    if args.config is None and args.nu is None:
        print("bounds needs either --config (instance sweep) or --nu (direct constants)", file=sys.stderr)
        return 2
    if args.config is not None:
        config = _config_from_args(args)
        rows = sweep_bounds(config, out_csv=args.out)
        if args.out:
            print(f"wrote {len(rows)} bound rows to {args.out}")
        else:
            print(json.dumps(rows, indent=2))
        return 0
    mixing = MixingParams(beta_bar=args.beta_bar, b=args.b, kappa=args.kappa)
    rows = []
    for lam in args.lambdas or (0.0, 0.3, 0.5, 0.7, 0.9, 1.0):
        for n in args.ns or (1_000, 10_000, 100_000):
            inputs = BoundInputs(
                n=n,
                delta=args.delta or 0.05,
                lam=lam,
                gamma=args.gamma or 0.99,
                d=args.dim or 20,
                L=args.feature_bound,
                nu=args.nu,
                r_max=args.r_max,
                mixing=mixing,
            )
            report = global_bound(inputs, args.proj_residual)
            rows.append({"lambda": lam, "n": n, **report.__dict__})
    print(json.dumps(rows, indent=2))
    return 0


def _cmd_report(args) -> int:
    records = []
    for path in args.runs:
        records.extend(read_run_csv(path))
    if not records:
        print("no records found", file=sys.stderr)
        return 1
    summary = summarize(records)
    write_summary_csv(summary, args.out)
    print(f"wrote {len(summary)} summary rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lstdlab",
        description="Policy-evaluation laboratory for trace-based least-squares estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="emit instance files (kernel, rewards, features)")
    _add_config_overrides(p_gen)
    p_gen.add_argument("--out", type=Path, required=True, help="output directory")
    p_gen.set_defaults(func=_cmd_generate)

    p_run = sub.add_parser("run", help="run the Monte-Carlo experiment grid")
    _add_config_overrides(p_run)
    p_run.add_argument("--out", type=Path, required=True, help="run CSV path")
    p_run.add_argument("--summary-out", type=Path, help="summary CSV path")
    p_run.set_defaults(func=_cmd_run)

    p_bounds = sub.add_parser(
        "bounds", help="evaluate bound formulas over a grid (config sweep or direct constants)"
    )
    _add_config_overrides(p_bounds)
    p_bounds.add_argument("--out", type=Path, help="sweep CSV path (config mode)")
    p_bounds.add_argument("--nu", type=float, help="smallest Gram eigenvalue (direct mode)")
    p_bounds.add_argument("--feature-bound", type=float, default=1.0, help="sup bound L")
    p_bounds.add_argument("--r-max", type=float, default=1.0, help="reward bound")
    p_bounds.add_argument(
        "--proj-residual",
        type=float,
        default=1.0,
        help="projection residual scale; 1.0 reports bare coefficients",
    )
    p_bounds.add_argument("--beta-bar", type=float, default=1.0)
    p_bounds.add_argument("--b", type=float, default=1.0)
    p_bounds.add_argument("--kappa", type=float, default=1.0)
    p_bounds.set_defaults(func=_cmd_bounds)

    p_report = sub.add_parser("report", help="aggregate run CSVs into a summary CSV")
    p_report.add_argument("runs", nargs="+", type=Path, help="run CSV files")
    p_report.add_argument("--out", type=Path, required=True, help="summary CSV path")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
