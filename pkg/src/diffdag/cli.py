"""Command-line front-end; every subcommand is a thin adapter.

Exit codes: 0 on success, 1 on domain errors (infeasibility, order stall,
assumption failure under --strict), 2 on usage errors including malformed
config files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import DiffDagError
from .estimators import (
    EstimatorConfig,
    estimate_dantzig,
    solve_population,
    threshold,
)
from .experiments import (
    SweepConfig,
    aggregate,
    format_summary_table,
    run_sweep,
    write_plot_tsv,
    write_records_csv,
    write_summary_json,
)
from .oracles import check_assumptions, minimax_sample_bound
from .pipeline import PipelineConfig, run_pipeline
from .sem import (
    CovariancePair,
    SemPairGenConfig,
    generate_sem_pair,
    load_data_csv,
    load_sem,
    save_sem,
)


class UsageError(Exception):
    """Bad invocation detected after argparse (e.g. malformed config file)."""


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None


def _out_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_generate(args) -> int:
    cfg_dict = _load_json(args.config) if args.config else {}
    overrides = {
        "p": args.p,
        "seed": args.seed,
        "expected_neighbors": args.expected_neighbors,
        "edge_change_prob": args.edge_change_prob,
        "min_delta_omega": args.min_delta_omega,
    }
    cfg_dict.update({k: v for k, v in overrides.items() if v is not None})
    if "p" not in cfg_dict:
        raise UsageError("generate needs --p or a config file with p")
    try:
        cfg = SemPairGenConfig.from_json(cfg_dict)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad generator config: {exc}") from None
    sem1, sem2, delta = generate_sem_pair(cfg)
    out = _out_dir(args)
    save_sem(sem1, out / "sem1.json")
    save_sem(sem2, out / "sem2.json")
    _write_json(delta.to_json(), out / "true_delta.json")
    print(f"wrote sem1.json, sem2.json, true_delta.json to {out} "
          f"({len(delta.edges)} difference edges)")
    return 0


def _covariances_from_args(args, parser: argparse.ArgumentParser) -> CovariancePair:
    if args.sem1 or args.sem2:
        if not (args.sem1 and args.sem2):
            parser.error("--sem1 and --sem2 must be given together")
        if args.data1 or args.data2:
            parser.error("give either SEM files or data files, not both")
        if not args.population:
            parser.error("SEM inputs provide exact covariances; pass --population")
        return CovariancePair.from_sems(load_sem(args.sem1), load_sem(args.sem2))
    if not (args.data1 and args.data2):
        parser.error("need --sem1/--sem2 or --data1/--data2")
    if args.population:
        parser.error("--population requires SEM inputs, not sampled data")
    return CovariancePair.from_data(load_data_csv(args.data1), load_data_csv(args.data2))


def _estimator_config(args) -> EstimatorConfig:
    kwargs = {}
    if args.epsilon is not None:
        kwargs["epsilon"] = args.epsilon
    if getattr(args, "lambda_", None) is not None:
        kwargs["lambda_n"] = args.lambda_
    if args.lambda_auto:
        kwargs["lambda_auto"] = True
    return EstimatorConfig(**kwargs)


def _cmd_estimate_delta(args, parser) -> int:
    cov = _covariances_from_args(args, parser)
    if args.population:
        dp = solve_population(cov)
        if args.epsilon is not None:
            dp = threshold(dp, args.epsilon)
    else:
        dp = estimate_dantzig(cov, _estimator_config(args))
    out = _out_dir(args)
    _write_json(dp.to_json(), out / "delta.json")
    print(f"wrote delta.json to {out} ({dp.support_size()} nonzero entries)")
    return 0


def _cmd_run_pipeline(args, parser) -> int:
    cov = _covariances_from_args(args, parser)
    if args.population:
        if args.sem1:
            report = check_assumptions(
                load_sem(args.sem1), load_sem(args.sem2), args.epsilon or 0.125
            )
            if not report.passed:
                msg = f"assumption check failed: {report.failed_condition}: {report.detail}"
                if args.strict:
                    print(f"error: {msg}", file=sys.stderr)
                    return 1
                print(f"warning: {msg}", file=sys.stderr)
        cfg = PipelineConfig(estimator="population", record_trace=args.trace)
    else:
        cfg = PipelineConfig(
            estimator="dantzig", est_cfg=_estimator_config(args), record_trace=args.trace
        )
    result = run_pipeline(cov, cfg)
    out = _out_dir(args)
    _write_json(result.to_json(), out / "pipeline.json")
    print(f"wrote pipeline.json to {out} ({len(result.delta.edges)} difference edges, "
          f"{len(result.invariant_vertices)} invariant vertices)")
    return 0


def _cmd_check_assumptions(args) -> int:
    report = check_assumptions(load_sem(args.sem1), load_sem(args.sem2), args.epsilon)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if not report.passed and args.strict:
        return 1
    return 0


def _cmd_sweep(args) -> int:
    cfg_dict = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        cfg_dict["seed_base"] = args.seed
    try:
        cfg = SweepConfig.from_json(cfg_dict)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad sweep config: {exc}") from None
    records = run_sweep(cfg)
    summaries = aggregate(records)
    out = _out_dir(args)
    write_records_csv(records, out / "records.csv")
    write_summary_json(summaries, out / "summary.json")
    write_plot_tsv(summaries, out / "plot.tsv")
    with open(out / "table.txt", "w", encoding="utf-8") as fh:
        fh.write(format_summary_table(summaries))
    print(f"wrote records.csv, summary.json, plot.tsv, table.txt to {out} "
          f"({len(records)} trials, {len(summaries)} cells)")
    return 0


def _cmd_bound(args) -> int:
    print(minimax_sample_bound(args.p, args.d))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffdag",
        description="Directly estimate the structural difference between two linear SEMs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p: argparse.ArgumentParser):
        p.add_argument("--sem1", help="first SEM as JSON (population covariances)")
        p.add_argument("--sem2", help="second SEM as JSON")
        p.add_argument("--data1", help="first sample matrix as CSV, one row per observation")
        p.add_argument("--data2", help="second sample matrix as CSV")
        p.add_argument("--population", action="store_true",
                       help="use exact covariances (requires SEM inputs)")
        p.add_argument("--epsilon", type=float, default=None, help="hard threshold for support")
        p.add_argument("--lambda", dest="lambda_", type=float, default=None,
                       help="constraint radius of the l1 program")
        p.add_argument("--lambda-auto", action="store_true",
                       help="set the radius from the sample sizes")
        p.add_argument("--output-dir", default=".", help="where to write artifacts")

    g = sub.add_parser("generate", help="generate a random SEM pair with a sparse difference")
    g.add_argument("--p", type=int, default=None, help="number of vertices")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--expected-neighbors", type=float, default=None)
    g.add_argument("--edge-change-prob", type=float, default=None)
    g.add_argument("--min-delta-omega", type=float, default=None)
    g.add_argument("--config", help="generator config JSON; flags override")
    g.add_argument("--output-dir", default=".")
    g.set_defaults(func=lambda a, p=None: _cmd_generate(a))

    e = sub.add_parser("estimate-delta", help="estimate the precision-matrix difference")
    add_io(e)
    e.set_defaults(func=_cmd_estimate_delta, needs_parser=True)

    r = sub.add_parser("run-pipeline", help="recover the difference DAG")
    add_io(r)
    r.add_argument("--strict", action="store_true",
                   help="fail when the assumption check fails (SEM inputs only)")
    r.add_argument("--trace", action="store_true", help="record intermediate estimates")
    r.set_defaults(func=_cmd_run_pipeline, needs_parser=True)

    c = sub.add_parser("check-assumptions", help="report whether a SEM pair is recoverable")
    c.add_argument("--sem1", required=True)
    c.add_argument("--sem2", required=True)
    c.add_argument("--epsilon", type=float, default=0.125)
    c.add_argument("--strict", action="store_true", help="exit 1 when the check fails")
    c.set_defaults(func=lambda a, p=None: _cmd_check_assumptions(a))

    s = sub.add_parser("sweep", help="run the synthetic benchmark grid")
    s.add_argument("--config", help="sweep config JSON")
    s.add_argument("--seed", type=int, default=None, help="override the base seed")
    s.add_argument("--output-dir", default=".")
    s.set_defaults(func=lambda a, p=None: _cmd_sweep(a))

    b = sub.add_parser("bound", help="sample-count lower bound for recoverability")
    b.add_argument("--p", type=int, required=True)
    b.add_argument("--d", type=int, required=True)
    b.set_defaults(func=lambda a, p=None: _cmd_bound(a))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "needs_parser", False):
            return args.func(args, parser)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DiffDagError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
