"""Experiment pipeline: single runs, invariant audits, CSV logs, log
verification, and seed sweeps.

A run resolves the optimum guess (exact oracle, fixed value, or
guess-and-double), covers the job stream fractionally, rounds it online, and
leaves behind a self-contained log directory: the instance, a metadata
document, per-step and per-job CSV logs, and a one-row report. ``verify``
re-derives every checkable quantity from those files alone.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .doubling import PhaseTrace, run_with_doubling, snapshot_phase
from .fractional import FractionalState, JobFraction, preprocess
from .instances import (
    GeneratorConfig,
    Instance,
    InstanceFormatError,
    generate,
    load_instance,
    save_instance,
)
from .oracle import (
    OracleResult,
    OracleTooLargeError,
    optimal_bnb,
    optimal_exhaustive,
)
from .rounding import RoundingState

CHECK_FAMILIES = ("feasibility", "potential", "consistency", "rounding")
TOL = 1e-9

REPORT_COLUMNS = (
    "seed",
    "B",
    "L",
    "frac_cost",
    "frac_makespan",
    "int_cost",
    "int_makespan",
    "cost_ratio",
    "makespan_ratio",
    "clamp_count",
    "fallback_count",
    "invariant_violations",
)

STEP_COLUMNS = ("job", "step_idx", "type", "delta_phi", "delta_coverage", "machines_touched")
ASSIGNMENT_COLUMNS = ("job", "machine", "p_ij", "newly_activated_cost", "cum_cost", "int_makespan")
PHASE_COLUMNS = ("phase", "guess", "jobs_processed", "frac_cost", "int_cost_delta")
Y_COLUMNS = ("phase", "job", "machine", "y")


@dataclass
class RunConfig:
    alpha_mode: str = "oracle"  # oracle | fixed | double
    alpha_value: float | None = None
    seed: int = 0
    a: float = 1.05
    C: float = 50.0
    step_cap: int = 10**7
    checks: tuple[str, ...] = CHECK_FAMILIES
    recover_all: bool = False

    def __post_init__(self) -> None:
        if self.alpha_mode not in ("oracle", "fixed", "double"):
            raise ValueError(f"unknown alpha_mode {self.alpha_mode!r}")
        if self.alpha_mode == "fixed" and (self.alpha_value is None or self.alpha_value <= 0):
            raise ValueError("fixed alpha_mode needs alpha_value > 0")
        unknown = set(self.checks) - set(CHECK_FAMILIES)
        if unknown:
            raise ValueError(f"unknown check families: {sorted(unknown)}")


class Violations:
    """Counted audit failures, grouped by check family."""

    def __init__(self) -> None:
        self.counts: dict[str, int] = {fam: 0 for fam in CHECK_FAMILIES}
        self.messages: list[str] = []

    def add(self, family: str, message: str) -> None:
        self.counts[family] += 1
        if len(self.messages) < 50:
            self.messages.append(f"[{family}] {message}")

    def extend(self, family: str, messages: list[str]) -> None:
        for msg in messages:
            self.add(family, msg)

    def total(self) -> int:
        return sum(self.counts.values())


# -- audits -------------------------------------------------------------------


def audit_preprocess(fstate: FractionalState) -> list[str]:
    out = []
    if fstate.phi > fstate.m + TOL:
        out.append(f"post-preprocess potential {fstate.phi!r} exceeds m={fstate.m}")
    return out


def audit_job(fstate: FractionalState, j: int) -> list[str]:
    out = []
    cov = fstate.coverage[j]
    if not (1.0 - TOL <= cov <= 1.0):
        out.append(f"job {j}: coverage {cov!r} outside [1-1e-9, 1]")
    yrow = fstate.y[j]
    for i in range(fstate.m):
        if fstate.discarded[i]:
            if yrow[i] != 0.0:
                out.append(f"job {j}: discarded machine {i} holds y={yrow[i]!r}")
            continue
        if yrow[i] > 2.0 * fstate.x[i] + TOL:
            out.append(f"job {j}, machine {i}: y={yrow[i]!r} > 2x={2*fstate.x[i]!r}")
    for i in range(fstate.m):
        if fstate.discarded[i] or fstate.fully_active[i]:
            continue
        if fstate.load[i] > 6.0 * fstate.x[i] + TOL:
            out.append(
                f"machine {i}: load {fstate.load[i]!r} > 6x={6*fstate.x[i]!r} while partially active"
            )
    return out


def audit_consistency(fstate: FractionalState) -> list[str]:
    out = []
    recomputed = fstate.recompute_loads()
    for i in range(fstate.m):
        if abs(recomputed[i] - fstate.load[i]) > TOL:
            out.append(
                f"machine {i}: incremental load {fstate.load[i]!r} vs recomputed {recomputed[i]!r}"
            )
    for i in range(fstate.m):
        if fstate.fully_active[i] != (fstate.x[i] == 1.0):
            out.append(f"machine {i}: fully_active={fstate.fully_active[i]} but x={fstate.x[i]!r}")
    if abs(fstate.phi - fstate.potential()) > TOL:
        out.append(f"incremental phi {fstate.phi!r} vs recomputed {fstate.potential()!r}")
    return out


def audit_steps(phases: list[PhaseTrace], n: int) -> list[str]:
    out = []
    if n == 0:
        return out
    cap = 2.0 / n + TOL
    for trace in phases:
        for job, idx, outcome in trace.step_entries:
            if outcome.delta_potential > cap:
                out.append(
                    f"phase {trace.phase}, job {job}, step {idx}: "
                    f"delta_phi {outcome.delta_potential!r} > 2/n={2.0/n!r}"
                )
    return out


def audit_rounding(rstate: RoundingState, records: list[JobFraction]) -> list[str]:
    out = []
    loads = [0.0] * rstate.m
    for frac in records:
        j = frac.job
        if j not in rstate.assignment:
            out.append(f"job {j}: never assigned")
            continue
        i = rstate.assignment[j]
        if not rstate.active[i]:
            out.append(f"job {j}: assigned to inactive machine {i}")
        if not frac.eligible[i]:
            out.append(f"job {j}: assigned to ineligible machine {i}")
        loads[i] += frac.p_scaled[i]
    for i in range(rstate.m):
        if abs(loads[i] - rstate.int_load[i]) > TOL:
            out.append(
                f"machine {i}: integer load {rstate.int_load[i]!r} vs recomputed {loads[i]!r}"
            )
    return out


# -- oracle access --------------------------------------------------------------


def oracle_solve(
    instance: Instance, method: str = "auto", node_budget: int = 10**7
) -> OracleResult:
    """Exact optimum via the requested route; 'auto' uses branch-and-bound."""
    if method == "exhaustive":
        return optimal_exhaustive(instance)
    result = optimal_bnb(instance, node_budget=node_budget)
    if method in ("auto", "bnb"):
        if not result.exact:
            raise OracleTooLargeError(
                f"branch-and-bound hit its node budget ({node_budget}) without proof"
            )
        return result
    raise ValueError(f"unknown oracle method {method!r}")


def resolve_alpha(instance: Instance, config: RunConfig) -> tuple[float | None, float]:
    """Returns (B, alpha): B is the exact optimum when the oracle ran."""
    if config.alpha_mode == "fixed":
        return None, float(config.alpha_value)
    result = oracle_solve(instance)
    return result.optimal_cost, result.optimal_cost


# -- pipeline -------------------------------------------------------------------


@dataclass
class RunArtifacts:
    instance: Instance
    config: RunConfig
    alpha: float
    B: float | None
    phases: list[PhaseTrace]
    records: list[JobFraction]
    rounding: RoundingState
    violations: Violations
    row: dict


def replay_rounding(
    instance: Instance, records: list[JobFraction], seed: int
) -> RoundingState:
    """Re-run the rounding stage over frozen fractional snapshots."""
    rstate = RoundingState(instance, seed)
    for frac in records:
        rstate.process_job(frac)
    return rstate


def build_report_row(
    config: RunConfig,
    instance: Instance,
    B: float | None,
    phases: list[PhaseTrace],
    rounding: RoundingState,
    violations: Violations,
) -> dict:
    budget = instance.makespan_budget
    last = phases[-1] if phases else None
    frac_cost = last.frac_cost if last else 0.0
    frac_makespan = (last.frac_makespan if last else 0.0) * budget
    int_cost = rounding.int_cost
    int_makespan = rounding.int_makespan()
    clamp_count = sum(p.fraction_clamps + p.coverage_clamps for p in phases)
    return {
        "seed": config.seed,
        "B": B,
        "L": budget,
        "frac_cost": frac_cost,
        "frac_makespan": frac_makespan,
        "int_cost": int_cost,
        "int_makespan": int_makespan,
        "cost_ratio": (int_cost / B) if B else None,
        "makespan_ratio": int_makespan / budget,
        "clamp_count": clamp_count,
        "fallback_count": rounding.fallback_count,
        "invariant_violations": violations.total(),
    }


def run_pipeline(instance: Instance, config: RunConfig) -> RunArtifacts:
    violations = Violations()
    check = config.checks.__contains__

    def on_phase(fstate: FractionalState) -> None:
        if check("potential"):
            violations.extend("potential", audit_preprocess(fstate))

    def on_job(fstate: FractionalState, j: int) -> None:
        if check("feasibility"):
            violations.extend("feasibility", audit_job(fstate, j))
        if check("consistency"):
            violations.extend("consistency", audit_consistency(fstate))

    if config.alpha_mode == "double":
        result = run_with_doubling(
            instance,
            initial_guess=config.alpha_value,
            C=config.C,
            a=config.a,
            seed=config.seed,
            step_cap=config.step_cap,
            recover_all=config.recover_all,
            on_phase=on_phase,
            on_job=on_job,
        )
        B = None
        alpha = result.final_guess
        phases, records, rounding = result.phases, result.records, result.rounding
    else:
        B, alpha = resolve_alpha(instance, config)
        fstate = preprocess(instance, alpha, a=config.a, step_cap=config.step_cap)
        on_phase(fstate)
        rounding = RoundingState(instance, config.seed)
        records = []
        int_before = rounding.int_cost
        for j in range(instance.n_declared):
            fstate.process_job(j)
            on_job(fstate, j)
            frac = fstate.job_fraction(j)
            records.append(frac)
            rounding.process_job(frac)
        phases = [
            snapshot_phase(fstate, 0, alpha, instance.n_declared, rounding.int_cost - int_before)
        ]

    if check("potential"):
        violations.extend("potential", audit_steps(phases, instance.n_declared))
    if check("rounding"):
        violations.extend("rounding", audit_rounding(rounding, records))

    row = build_report_row(config, instance, B, phases, rounding, violations)
    return RunArtifacts(
        instance=instance,
        config=config,
        alpha=alpha,
        B=B,
        phases=phases,
        records=records,
        rounding=rounding,
        violations=violations,
        row=row,
    )


# -- log output ------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    return str(value)


def _write_csv(path: Path, header: tuple[str, ...], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_report_csv(path: Path, rows: list[dict], columns=REPORT_COLUMNS) -> None:
    _write_csv(path, tuple(columns), ([row.get(col) for col in columns] for row in rows))


def write_run_logs(artifacts: RunArtifacts, logdir: str | Path) -> Path:
    logdir = Path(logdir)
    logdir.mkdir(parents=True, exist_ok=True)
    save_instance(artifacts.instance, logdir / "instance.json")

    steps = []
    for trace in artifacts.phases:
        for job, idx, outcome in trace.step_entries:
            steps.append(
                (
                    job,
                    idx,
                    outcome.step_type,
                    outcome.delta_potential,
                    outcome.delta_coverage,
                    "|".join(str(i) for i in outcome.machines_touched),
                )
            )
    _write_csv(logdir / "steps.csv", STEP_COLUMNS, steps)

    yrows = []
    for trace in artifacts.phases:
        for job, yrow in trace.covered_y:
            for i, val in enumerate(yrow):
                if val != 0.0:
                    yrows.append((trace.phase, job, i, val))
    _write_csv(logdir / "y.csv", Y_COLUMNS, yrows)

    _write_csv(
        logdir / "assignments.csv",
        ASSIGNMENT_COLUMNS,
        (
            (r.job, r.machine, r.p_original, r.newly_activated_cost, r.cum_cost, r.int_makespan)
            for r in artifacts.rounding.log
        ),
    )

    _write_csv(
        logdir / "phases.csv",
        PHASE_COLUMNS,
        (
            (p.phase, p.guess, p.jobs_processed, p.frac_cost, p.int_cost_delta)
            for p in artifacts.phases
        ),
    )

    write_report_csv(logdir / "report.csv", [artifacts.row])

    meta = {
        "config": {
            "alpha_mode": artifacts.config.alpha_mode,
            "alpha_value": artifacts.config.alpha_value,
            "seed": artifacts.config.seed,
            "a": artifacts.config.a,
            "C": artifacts.config.C,
            "step_cap": artifacts.config.step_cap,
            "checks": list(artifacts.config.checks),
            "recover_all": artifacts.config.recover_all,
        },
        "alpha": artifacts.alpha,
        "B": artifacts.B,
        "m": artifacts.instance.m,
        "n": artifacts.instance.n_declared,
        "L": artifacts.instance.makespan_budget,
        "phases": [
            {
                "phase": p.phase,
                "guess": p.guess,
                "jobs_processed": p.jobs_processed,
                "frac_cost": p.frac_cost,
                "frac_makespan": p.frac_makespan,
                "phi": p.phi,
                "x_final": list(p.x_final),
                "load_final": list(p.load_final),
                "scaled_costs": list(p.scaled_costs),
                "discarded": list(p.discarded),
                "fraction_clamps": p.fraction_clamps,
                "coverage_clamps": p.coverage_clamps,
            }
            for p in artifacts.phases
        ],
        "rounding": {
            "seed": artifacts.rounding.seed,
            "thresholds": artifacts.rounding.r,
            "active": artifacts.rounding.active,
            "int_load": artifacts.rounding.int_load,
            "int_cost": artifacts.rounding.int_cost,
            "fallback_count": artifacts.rounding.fallback_count,
            "deficit_jobs": artifacts.rounding.deficit_jobs,
            "assignment": {str(j): i for j, i in sorted(artifacts.rounding.assignment.items())},
        },
        "violations": {
            "counts": artifacts.violations.counts,
            "messages": artifacts.violations.messages,
        },
        "report": {k: artifacts.row[k] for k in REPORT_COLUMNS},
    }
    (logdir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return logdir


# -- log verification --------------------------------------------------------------


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def verify_logdir(logdir: str | Path) -> list[str]:
    """Re-check every derivable invariant from a run's log directory.

    Raises InstanceFormatError when the directory or a log file is missing
    (invalid input); content problems come back as violation messages.
    """
    logdir = Path(logdir)
    expected = ("instance.json", "meta.json", "y.csv", "steps.csv", "assignments.csv", "report.csv")
    for name in expected:
        if not (logdir / name).exists():
            raise InstanceFormatError(f"{logdir}: missing log file '{name}'")
    problems: list[str] = []
    try:
        instance = load_instance(logdir / "instance.json")
        meta = json.loads((logdir / "meta.json").read_text(encoding="utf-8"))
        yrows = _read_csv(logdir / "y.csv")
        steps = _read_csv(logdir / "steps.csv")
        assignments = _read_csv(logdir / "assignments.csv")
        report_rows = _read_csv(logdir / "report.csv")
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        return [f"cannot load logs: {exc}"]

    budget = instance.makespan_budget
    n = meta["n"]
    m = meta["m"]
    p_scaled = [tuple(p / budget for p in job.processing_times) for job in instance.jobs]

    # Per-phase fractional audit from the y log.
    by_phase: dict[int, dict[int, dict[int, float]]] = {}
    for row in yrows:
        ph, job, mach = int(row["phase"]), int(row["job"]), int(row["machine"])
        by_phase.setdefault(ph, {}).setdefault(job, {})[mach] = float(row["y"])
    for pmeta in meta["phases"]:
        ph = pmeta["phase"]
        jobs_here = by_phase.get(ph, {})
        x_final = pmeta["x_final"]
        discarded = pmeta["discarded"]
        loads = [0.0] * m
        for job, ys in sorted(jobs_here.items()):
            cov = 0.0
            for i, val in sorted(ys.items()):
                cov += val
                loads[i] += p_scaled[job][i] * val
                if val > 2.0 * x_final[i] + TOL:
                    problems.append(
                        f"phase {ph}, job {job}, machine {i}: y={val!r} > 2*x_final={2*x_final[i]!r}"
                    )
                if discarded[i]:
                    problems.append(f"phase {ph}, job {job}: y on discarded machine {i}")
            if not (1.0 - TOL <= cov <= 1.0):
                problems.append(f"phase {ph}, job {job}: coverage {cov!r} outside [1-1e-9, 1]")
        for i in range(m):
            if abs(loads[i] - pmeta["load_final"][i]) > TOL:
                problems.append(
                    f"phase {ph}, machine {i}: recomputed load {loads[i]!r} "
                    f"vs reported {pmeta['load_final'][i]!r}"
                )
            if not discarded[i] and x_final[i] < 1.0:
                if pmeta["load_final"][i] > 6.0 * x_final[i] + TOL:
                    problems.append(
                        f"phase {ph}, machine {i}: load {pmeta['load_final'][i]!r} "
                        f"> 6*x={6*x_final[i]!r} while partially active"
                    )

    # Per-step potential bound.
    if n > 0:
        cap = 2.0 / n + TOL
        for row in steps:
            if float(row["delta_phi"]) > cap:
                problems.append(
                    f"job {row['job']} step {row['step_idx']}: delta_phi {row['delta_phi']} > 2/n"
                )

    # Integer schedule audit.
    active = meta["rounding"]["active"]
    int_load = [0.0] * m
    prev_cum = 0.0
    running_makespan = 0.0
    for row in assignments:
        i = int(row["machine"])
        if not active[i]:
            problems.append(f"job {row['job']} assigned to machine {i} not in final active set")
        int_load[i] += float(row["p_ij"]) / budget
        cum = float(row["cum_cost"])
        if abs(cum - (prev_cum + float(row["newly_activated_cost"]))) > TOL:
            problems.append(f"job {row['job']}: cum_cost {cum!r} breaks the running sum")
        prev_cum = cum
        running_makespan = max(running_makespan, max(int_load) * budget)
        if abs(float(row["int_makespan"]) - running_makespan) > TOL:
            problems.append(f"job {row['job']}: int_makespan column mismatch")
    for i in range(m):
        if abs(int_load[i] - meta["rounding"]["int_load"][i]) > TOL:
            problems.append(
                f"machine {i}: integer load recomputed {int_load[i]!r} "
                f"vs reported {meta['rounding']['int_load'][i]!r}"
            )
    if assignments and abs(prev_cum - meta["rounding"]["int_cost"]) > TOL:
        problems.append("final cum_cost does not match reported int_cost")

    # Report row vs metadata.
    if len(report_rows) != 1:
        problems.append(f"report.csv has {len(report_rows)} rows (expected 1)")
    else:
        for col in REPORT_COLUMNS:
            want = _fmt(meta["report"][col])
            got = report_rows[0][col]
            if want != got:
                problems.append(f"report column {col}: {got!r} != {want!r}")

    return problems


# -- sweeps -------------------------------------------------------------------------


SWEEP_COLUMNS = ("instance",) + REPORT_COLUMNS
AGGREGATE_METRICS = (
    "frac_cost",
    "frac_makespan",
    "int_cost",
    "int_makespan",
    "cost_ratio",
    "makespan_ratio",
    "clamp_count",
    "fallback_count",
    "invariant_violations",
)


def sweep_cell_label(m: int, n: int, seed: int, model: str) -> str:
    return f"m{m}-n{n}-s{seed}-{model}"


def run_sweep(config_doc: dict, out_path: str | Path) -> dict:
    """Run a seed grid and write per-run rows plus an aggregate table.

    Config document shape::

        {"cells": [{"m": 4, "n": 8, "model": "uniform",
                    "cost_range": [1.0, 10.0],
                    "instance_seeds": [0, 1], "rounding_seeds": [0, 1, 2]}],
         "alpha_mode": "oracle", "a": 1.05, "C": 50.0,
         "checks": ["feasibility", "potential", "consistency", "rounding"]}
    """
    cells = config_doc.get("cells")
    if not cells:
        raise ValueError("sweep config: missing or empty 'cells'")
    alpha_mode = config_doc.get("alpha_mode", "oracle")
    alpha_value = config_doc.get("alpha_value")
    a = config_doc.get("a", 1.05)
    C = config_doc.get("C", 50.0)
    checks = tuple(config_doc.get("checks", CHECK_FAMILIES))

    rows: list[dict] = []
    for cell in cells:
        for key in ("m", "n", "model", "instance_seeds", "rounding_seeds"):
            if key not in cell:
                raise ValueError(f"sweep config: cell missing key '{key}'")
        cost_range = tuple(cell.get("cost_range", (1.0, 10.0)))
        for iseed in cell["instance_seeds"]:
            instance = generate(
                GeneratorConfig(
                    m=cell["m"],
                    n=cell["n"],
                    seed=iseed,
                    cost_range=cost_range,
                    ptime_model=cell["model"],
                )
            )
            label = sweep_cell_label(cell["m"], cell["n"], iseed, cell["model"])
            rounding_seeds = list(cell["rounding_seeds"])
            base_config = RunConfig(
                alpha_mode=alpha_mode,
                alpha_value=alpha_value,
                seed=rounding_seeds[0],
                a=a,
                C=C,
                checks=checks,
            )
            artifacts = run_pipeline(instance, base_config)
            rows.append({"instance": label, **artifacts.row})
            # Later rounding seeds replay the frozen fractional snapshots.
            for rseed in rounding_seeds[1:]:
                rounding = replay_rounding(instance, artifacts.records, rseed)
                extra = Violations()
                if "rounding" in checks:
                    extra.extend("rounding", audit_rounding(rounding, artifacts.records))
                frac_viol = artifacts.violations.total() - artifacts.violations.counts["rounding"]
                cfg = RunConfig(
                    alpha_mode=alpha_mode,
                    alpha_value=alpha_value,
                    seed=rseed,
                    a=a,
                    C=C,
                    checks=checks,
                )
                row = build_report_row(
                    cfg, instance, artifacts.B, artifacts.phases, rounding, extra
                )
                row["invariant_violations"] = frac_viol + extra.total()
                rows.append({"instance": label, **row})

    out_path = Path(out_path)
    write_report_csv(out_path, rows, columns=SWEEP_COLUMNS)

    aggregate: dict[str, dict[str, float]] = {}
    for metric in AGGREGATE_METRICS:
        values = [row[metric] for row in rows if row.get(metric) is not None]
        if not values:
            continue
        arr = np.asarray(values, dtype=float)
        aggregate[metric] = {
            "mean": float(arr.mean()),
            "max": float(arr.max()),
            "p95": float(np.percentile(arr, 95)),
        }
    agg_path = out_path.with_name(out_path.stem + "_aggregate.csv")
    _write_csv(
        agg_path,
        ("metric", "mean", "max", "p95"),
        (
            (metric, stats["mean"], stats["max"], stats["p95"])
            for metric, stats in aggregate.items()
        ),
    )
    return aggregate
