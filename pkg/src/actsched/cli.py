"""Command-line harness: generate instances, query the offline oracle, run
the online pipeline, verify logs, and sweep seed grids.

Exit codes: 0 success, 2 invalid input, 3 invariant violation, 4 oracle
infeasible or too large.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .doubling import GuessBoundExceededError
from .experiment import (
    CHECK_FAMILIES,
    RunConfig,
    oracle_solve,
    run_pipeline,
    run_sweep,
    verify_logdir,
    write_run_logs,
)
from .fractional import GuessTooSmallError, StalledStepError, StepCapError
from .instances import (
    PTIME_MODELS,
    GeneratorConfig,
    InstanceFormatError,
    generate,
    load_instance,
    save_instance,
)
from .oracle import InfeasibleInstanceError, OracleTooLargeError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_VIOLATION = 3
EXIT_ORACLE = 4

SEED_ENV = "ACTSCHED_SEED"


def _default_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env:
        return int(env)
    return 0


def cmd_gen(args) -> int:
    config = GeneratorConfig(
        m=args.m,
        n=args.n,
        seed=_default_seed(args.seed),
        cost_range=(args.cost_low, args.cost_high),
        ptime_model=args.model,
    )
    instance = generate(config)
    save_instance(instance, args.out)
    print(f"wrote {args.out} (m={instance.m}, n={instance.n}, L={instance.makespan_budget})")
    return EXIT_OK


def cmd_oracle(args) -> int:
    instance = load_instance(args.infile)
    result = oracle_solve(instance, method=args.method, node_budget=args.node_budget)
    print(
        json.dumps(
            {
                "B": result.optimal_cost,
                "witness_makespan": result.witness_makespan,
                "nodes_explored": result.nodes_explored,
                "exact": result.exact,
            }
        )
    )
    return EXIT_OK


def _parse_alpha(raw: str) -> tuple[str, float | None]:
    if raw == "oracle":
        return "oracle", None
    if raw == "double":
        return "double", None
    try:
        return "fixed", float(raw)
    except ValueError:
        raise ValueError(
            f"--alpha must be 'oracle', 'double', or a number, got {raw!r}"
        ) from None


def cmd_run(args) -> int:
    instance = load_instance(args.infile)
    mode, value = _parse_alpha(args.alpha)
    if args.no_checks:
        checks: tuple[str, ...] = ()
    elif args.checks is not None:
        checks = tuple(fam.strip() for fam in args.checks.split(",") if fam.strip())
    else:
        checks = CHECK_FAMILIES
    config = RunConfig(
        alpha_mode=mode,
        alpha_value=value,
        seed=_default_seed(args.seed),
        a=args.a,
        C=args.C,
        step_cap=args.step_cap,
        checks=checks,
        recover_all=args.recover_all,
    )
    artifacts = run_pipeline(instance, config)
    write_run_logs(artifacts, args.logdir)
    row = artifacts.row
    print(
        f"alpha={artifacts.alpha} frac_cost={row['frac_cost']} int_cost={row['int_cost']} "
        f"int_makespan={row['int_makespan']} violations={row['invariant_violations']}"
    )
    if row["invariant_violations"] > 0:
        for msg in artifacts.violations.messages[:10]:
            print(f"violation: {msg}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_verify(args) -> int:
    problems = verify_logdir(args.logdir)
    if problems:
        for msg in problems[:50]:
            print(f"violation: {msg}", file=sys.stderr)
        print(f"{len(problems)} violation(s) in {args.logdir}")
        return EXIT_VIOLATION
    print(f"ok: {args.logdir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config_path = Path(args.config)
    if not config_path.exists():
        raise InstanceFormatError(f"{config_path}: file not found")
    config_doc = json.loads(config_path.read_text(encoding="utf-8"))
    aggregate = run_sweep(config_doc, args.out)
    violations = aggregate.get("invariant_violations", {}).get("max", 0.0)
    for metric, stats in aggregate.items():
        print(f"{metric}: mean={stats['mean']} max={stats['max']} p95={stats['p95']}")
    if violations > 0:
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actsched",
        description="Online machine-activation scheduling harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a random instance file")
    p_gen.add_argument("--m", type=int, required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--model", choices=PTIME_MODELS, default="uniform")
    p_gen.add_argument("--cost-low", type=float, default=1.0)
    p_gen.add_argument("--cost-high", type=float, default=10.0)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen)

    p_oracle = sub.add_parser("oracle", help="exact offline optimum of an instance")
    p_oracle.add_argument("--in", dest="infile", required=True)
    p_oracle.add_argument("--method", choices=("auto", "exhaustive", "bnb"), default="auto")
    p_oracle.add_argument("--node-budget", type=int, default=10**7)
    p_oracle.set_defaults(func=cmd_oracle)

    p_run = sub.add_parser("run", help="run the online pipeline on an instance")
    p_run.add_argument("--in", dest="infile", required=True)
    p_run.add_argument("--alpha", default="oracle", help="'oracle', 'double', or a number")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--a", type=float, default=1.05)
    p_run.add_argument("--C", type=float, default=50.0)
    p_run.add_argument("--step-cap", type=int, default=10**7)
    p_run.add_argument("--checks", default=None, help="comma-separated check families")
    p_run.add_argument("--no-checks", action="store_true")
    p_run.add_argument("--recover-all", action="store_true")
    p_run.add_argument("--logdir", required=True)
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="re-check invariants from run logs")
    p_verify.add_argument("--logdir", required=True)
    p_verify.set_defaults(func=cmd_verify)

    p_sweep = sub.add_parser("sweep", help="run a seed grid from a config file")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags already; normalize other codes
        return EXIT_INVALID if exc.code not in (0,) else EXIT_OK
    try:
        return args.func(args)
    except (InfeasibleInstanceError, OracleTooLargeError) as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (
        InstanceFormatError,
        GuessTooSmallError,
        GuessBoundExceededError,
        StepCapError,
        StalledStepError,
        ValueError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
