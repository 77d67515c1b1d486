"""
Command-line entry point: run, sweep, bound, kl, indices, cellcheck and list-benchmarks.

Configuration comes from an optional JSON file; flags given on the command line override it.
Exit codes: 0 success, 1 configuration or domain error or a failed check (bound, indices, cellcheck),
2 run truncated because it left the box.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type, TypeVar

import structlog
from pydantic import BaseModel

from subgradlab.core.decorators import EXIT_FAILURE, EXIT_LEFT_DOMAIN, EXIT_OK, handle_command_errors
from subgradlab.core.env_validator import get_environment_info, validate_settings
from subgradlab.core.exceptions import ConfigurationError, SubgradLabError, ValidationError
from subgradlab.core.utils import atomic_write_json, config_hash, get_current_timestamp
from subgradlab.core.validators import validate_point
from subgradlab.schemas.documents import CellCheckConfig, ExperimentConfig, SweepConfig
from subgradlab.services import corpus
from subgradlab.services.cells import inflate_inset, inflate_margin, quasiconvexity_estimate, shrink_cell, verify_inclusions
from subgradlab.services.diagnostics import (
    ProofConstants,
    check_descent,
    check_diameter_bound,
    estimate_kl,
    fit_sigma,
    kl_violation_rate,
    projected_trace,
)
from subgradlab.services.engine import Trajectory, critical_point_check, detect_convergence, diameter, run, verdict_window
from subgradlab.services.indices import check_index_invariants, extract_indices
from subgradlab.services.observability import configure_logging, observability
from subgradlab.services.reports import run_summary, write_sweep_csv, write_trace_csv

logger = structlog.get_logger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def load_config(path: Optional[str], model: Type[ModelT], overrides: Dict[str, Any]) -> ModelT:
    """
    Read a JSON config file (if any), apply non-None flag overrides and validate.

    Raises:
        ConfigurationError: The file is missing or is not valid JSON (with line and column)
    """
    document: Dict[str, Any] = {}
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read config file: {e}", config_key=path) from e
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"invalid JSON in {path}: {e.msg}", config_key=path, line=e.lineno, column=e.colno) from e
        if not isinstance(document, dict):
            raise ConfigurationError(f"{path} must contain a JSON object", config_key=path, line=1, column=1)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            document[key] = {**document.get(key, {}), **value}
        else:
            document[key] = value
    return model.model_validate(document)


def _diagnostic_overrides(args: argparse.Namespace) -> Optional[Dict[str, bool]]:
    toggles = {name: True for name in ("kl", "indices", "bound", "descent") if getattr(args, name, False)}
    return toggles or None


def experiment_from_args(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(
        args.config,
        ExperimentConfig,
        {
            "benchmark": args.benchmark,
            "x0": args.x0,
            "schedule": args.schedule,
            "policy": args.policy,
            "K": args.K,
            "seed": args.seed,
            "tol": args.tol,
            "output_dir": args.output_dir,
            "stratum": args.stratum,
            "samples": args.samples,
            "diagnostics": _diagnostic_overrides(args),
        },
    )


def _constants(config: ExperimentConfig, entry: corpus.BenchmarkEntry) -> ProofConstants:
    if config.constants is None:
        return entry.constants
    return ProofConstants.from_document(config.constants.model_dump())


def _stratum(config: ExperimentConfig, entry: corpus.BenchmarkEntry):
    if config.stratum is None:
        raise ValidationError("this diagnostic needs a stratum id", field="stratum")
    return entry.stratification[config.stratum]


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def execute_run(config: ExperimentConfig, record: bool = True) -> Tuple[Trajectory, Dict[str, Any]]:
    """
    Run one configured trajectory with its toggled diagnostics and build the summary document.

    With `record=False` nothing is counted in the metrics registry; sweep workers leave that to the parent.
    """
    entry = corpus.get(config.benchmark)
    f = entry.function
    x0 = validate_point(config.x0 if config.x0 is not None else entry.default_x0, f.dimension, "x0")

    with observability.timed("run", benchmark=config.benchmark) as timing:
        traj = run(f, x0, config.schedule, config.policy, config.K, config.seed)
    verdict = detect_convergence(traj, config.tol)
    tail = diameter(traj, max(traj.K - verdict_window(traj.K), 0), traj.K) if traj.K else 0.0
    critical = None if traj.left_domain else critical_point_check(f, traj.final_point, 1e-6, radius=tail)

    diagnostics: Dict[str, Any] = {}
    pc = _constants(config, entry)
    strat = entry.stratification
    if config.diagnostics.kl:
        M = _stratum(config, entry)
        fit = estimate_kl(f, M, entry.critical_value, config.samples, config.seed, entry.epsilon, strat)
        diagnostics["kl"] = fit.to_dict()
    if config.diagnostics.descent:
        M = _stratum(config, entry)
        pt = projected_trace(traj, M, pc, f, strat)
        diagnostics["descent"] = check_descent(pt, f, M)
        observability.log_check(
            "descent", not diagnostics["descent"]["violations"], record=record, benchmark=config.benchmark
        )
    if config.diagnostics.indices:
        trace = extract_indices(traj, pc, strat)
        diagnostics["indices"] = trace.to_dict()
        diagnostics["index_invariant_violations"] = check_index_invariants(trace, len(strat.non_open()))
    if config.diagnostics.bound:
        report = check_diameter_bound(traj, pc, entry.critical_value)
        diagnostics["bound"] = report.to_dict()
        observability.log_check("diameter_bound", report.satisfied, record=record, benchmark=config.benchmark)

    document = config.model_dump()
    summary = run_summary(
        traj,
        verdict,
        document,
        config_hash(document),
        critical,
        tail,
        diagnostics,
        get_environment_info(),
        wall_seconds=timing["duration"],
    )
    observability.log_run(
        config.benchmark,
        traj.K,
        verdict.kind,
        tail,
        timing["duration"],
        record=record,
        schedule=traj.schedule,
        seed=traj.seed,
    )
    return traj, summary


@handle_command_errors("run")
def cmd_run(config: ExperimentConfig) -> int:
    traj, summary = execute_run(config)
    out = Path(config.output_dir)
    timestamp = get_current_timestamp()
    write_trace_csv(out / "trace.csv", traj, summary["config_hash"], timestamp)
    atomic_write_json(out / "summary.json", {**summary, "generated_at": timestamp})
    print(summary["verdict_label"])
    return EXIT_LEFT_DOMAIN if traj.left_domain else EXIT_OK


def _trace_name(benchmark: str, schedule: str, policy: str, seed: int) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", f"{benchmark}_{schedule}_{policy}_{seed}").strip("_") + ".csv"


def _sweep_row(task: Tuple[Dict[str, Any], Optional[str], str]) -> Dict[str, Any]:
    """Worker: one (benchmark, schedule, policy, seed) row; failures are recorded, never raised."""
    document, trace_dir, timestamp = task
    row: Dict[str, Any] = {key: document[key] for key in ("benchmark", "schedule", "policy", "seed", "K")}
    try:
        config = ExperimentConfig.model_validate(document)
        traj, summary = execute_run(config, record=False)
        if trace_dir is not None:
            name = _trace_name(config.benchmark, config.schedule, config.policy, config.seed)
            write_trace_csv(Path(trace_dir) / name, traj, summary["config_hash"], timestamp)
        row.update(
            status="ok",
            verdict=summary["verdict"]["kind"],
            amplitude=summary["verdict"]["amplitude"],
            tail_diameter=summary["tail_diameter"],
            final_value=summary["final_value"],
            left_domain=traj.left_domain,
            wall_seconds=summary["wall_seconds"],
            error="",
        )
    except (SubgradLabError, ValueError) as e:
        row.update(status="error", verdict="", error=str(e))
    return row


@handle_command_errors("sweep")
def cmd_sweep(config: SweepConfig) -> int:
    out = Path(config.output_dir)
    timestamp = get_current_timestamp()
    trace_dir = str(out / "traces") if config.traces else None
    tasks = [
        (
            {
                "benchmark": benchmark,
                "schedule": schedule,
                "policy": policy,
                "seed": seed,
                "K": config.K,
                "tol": config.tol,
                "output_dir": str(out),
            },
            trace_dir,
            timestamp,
        )
        for benchmark in config.benchmarks
        for schedule in config.schedules
        for policy in config.policies
        for seed in config.seeds
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(task) for task in tasks]

    # Workers never touch the registry, so the counts match for any --jobs
    for row in rows:
        observability.log_sweep_row(f"{row['benchmark']}/{row['schedule']}/{row['policy']}/{row['seed']}", row["status"])
        if row["status"] == "ok":
            observability.record_run(row["benchmark"], row["verdict"], row["tail_diameter"], row["wall_seconds"])
    write_sweep_csv(out / "sweep.csv", rows, config_hash(config.model_dump()), timestamp)
    observability.write_metrics(out / "metrics.prom")
    succeeded = sum(row["status"] == "ok" for row in rows)
    print(f"{succeeded}/{len(rows)} rows succeeded")
    return EXIT_OK if succeeded else EXIT_FAILURE


@handle_command_errors("bound")
def cmd_bound(config: ExperimentConfig, fit_seeds: int = 0, sigma: Optional[Sequence[float]] = None) -> int:
    """Diameter bound on one run; ς is fitted on `fit_seeds` training runs or taken from flags/config."""
    entry = corpus.get(config.benchmark)
    pc = _constants(config, entry)
    if sigma is not None:
        pc = pc.with_sigma(*sigma)
    x0 = config.x0 if config.x0 is not None else entry.default_x0
    fit = None
    if fit_seeds > 0:
        training = [run(entry.function, x0, config.schedule, config.policy, config.K, config.seed + i) for i in range(1, fit_seeds + 1)]
        fit = fit_sigma([check_diameter_bound(t, pc, entry.critical_value) for t in training])
        pc = pc.with_sigma(fit.sigma1, fit.sigma2)

    traj = run(entry.function, x0, config.schedule, config.policy, config.K, config.seed)
    report = check_diameter_bound(traj, pc, entry.critical_value)
    observability.log_check("diameter_bound", report.satisfied, benchmark=config.benchmark)
    document = config.model_dump()
    atomic_write_json(
        Path(config.output_dir) / "bound.json",
        {
            "config": document,
            "config_hash": config_hash(document),
            "seed": config.seed,
            "constants": pc.to_dict(),
            "sigma_fit": None if fit is None else fit.to_dict(),
            "report": report.to_dict(),
        },
    )
    print("satisfied" if report.satisfied else "violated")
    return EXIT_OK if report.satisfied else EXIT_FAILURE


@handle_command_errors("kl")
def cmd_kl(config: ExperimentConfig) -> int:
    entry = corpus.get(config.benchmark)
    M = _stratum(config, entry)
    strat = entry.stratification
    fit = estimate_kl(entry.function, M, entry.critical_value, config.samples, config.seed, entry.epsilon, strat)
    rate = kl_violation_rate(fit, entry.function, M, strat, config.samples, config.seed + 1)
    observability.log_check("kl_envelope", fit.envelope_violations == 0, benchmark=config.benchmark, stratum=M.id)
    document = config.model_dump()
    atomic_write_json(
        Path(config.output_dir) / "kl.json",
        {
            "config": document,
            "config_hash": config_hash(document),
            "fit": fit.to_dict(),
            "fresh_violation_rate": rate,
            "known_theta": entry.known_theta.get(M.id),
        },
    )
    print(f"theta={fit.theta:.6g} eta={fit.eta:.6g}")
    return EXIT_OK


@handle_command_errors("indices")
def cmd_indices(config: ExperimentConfig) -> int:
    entry = corpus.get(config.benchmark)
    x0 = config.x0 if config.x0 is not None else entry.default_x0
    traj = run(entry.function, x0, config.schedule, config.policy, config.K, config.seed)
    trace = extract_indices(traj, _constants(config, entry), entry.stratification)
    violations = check_index_invariants(trace, len(entry.stratification.non_open()))
    observability.log_check("index_invariants", not violations, benchmark=config.benchmark)
    document = config.model_dump()
    atomic_write_json(
        Path(config.output_dir) / "indices.json",
        {"config": document, "config_hash": config_hash(document), "trace": trace.to_dict(), "violations": violations},
    )
    print(f"{len(trace.I_C)} crossing indices, {len(trace.l)} blocks")
    return EXIT_OK if not violations else EXIT_FAILURE


@handle_command_errors("cellcheck")
def cmd_cellcheck(config: CellCheckConfig, corrupt: str = "none", quasiconvexity: bool = False) -> int:
    cell, params = corpus.get_cell(config.cell)
    shrunken = shrink_cell(cell, config.t, params)
    if corrupt == "margin":
        shrunken = inflate_margin(shrunken)
    elif corrupt == "inset":
        shrunken = inflate_inset(shrunken)
    report = verify_inclusions(cell, shrunken, config.samples, config.seed)
    if quasiconvexity:
        report["quasiconvexity"] = quasiconvexity_estimate(cell, seed=config.seed)
    observability.log_check("inclusions", report["passed"], cell=config.cell, corrupt=corrupt)
    document = config.model_dump()
    atomic_write_json(
        Path(config.output_dir) / "cellcheck.json",
        {"config": document, "config_hash": config_hash(document), "corrupt": corrupt, "report": report},
    )
    print(f"left={report['violations_left']} right={report['violations_right']}")
    return EXIT_OK if report["passed"] else EXIT_FAILURE


def cmd_list_benchmarks() -> int:
    for name in corpus.list_benchmarks():
        print(f"{name}\t{corpus.get(name).description}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--benchmark")
    parser.add_argument("--x0", type=float, nargs="+")
    parser.add_argument("--schedule", help="e.g. Constant(0.1), Harmonic(1,1), Power(1,0.5,1), Table(0.5,0.25)")
    parser.add_argument("--policy", choices=["MinNorm", "FirstActive", "RandomVertex", "RandomConvexCombination"])
    parser.add_argument("--K", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--stratum", type=int)
    parser.add_argument("--samples", type=int)
    parser.add_argument("--output-dir", dest="output_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subgradlab", description="Subgradient sequences on stratified functions")
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--log-format", choices=["console", "json"], default=None)
    parser.add_argument("--show-config", action="store_true", help="print the active configuration and exit")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run one trajectory and write trace.csv + summary.json")
    _add_experiment_flags(p_run)
    for name in ("kl", "indices", "bound", "descent"):
        p_run.add_argument(f"--{name}", action="store_true", help=f"attach the {name} diagnostic")

    p_sweep = sub.add_parser("sweep", help="grid of runs aggregated into sweep.csv")
    p_sweep.add_argument("--config")
    p_sweep.add_argument("--benchmarks", nargs="+")
    p_sweep.add_argument("--schedules", nargs="+")
    p_sweep.add_argument("--policies", nargs="+")
    p_sweep.add_argument("--seeds", type=int, nargs="+")
    p_sweep.add_argument("--K", type=int)
    p_sweep.add_argument("--tol", type=float)
    p_sweep.add_argument("--jobs", type=int)
    p_sweep.add_argument("--traces", action="store_true", default=None)
    p_sweep.add_argument("--output-dir", dest="output_dir")

    p_bound = sub.add_parser("bound", help="diameter bound report")
    _add_experiment_flags(p_bound)
    p_bound.add_argument("--fit-seeds", type=int, default=0, help="fit sigma on this many extra seeds first")
    p_bound.add_argument("--sigma", type=float, nargs=2, metavar=("SIGMA1", "SIGMA2"))

    p_kl = sub.add_parser("kl", help="fit KL constants on a stratum")
    _add_experiment_flags(p_kl)

    p_idx = sub.add_parser("indices", help="extract the crossing index trace of a run")
    _add_experiment_flags(p_idx)

    p_cell = sub.add_parser("cellcheck", help="shrink a corpus cell and verify the inclusions")
    p_cell.add_argument("--config")
    p_cell.add_argument("--cell")
    p_cell.add_argument("--t", type=float)
    p_cell.add_argument("--samples", type=int)
    p_cell.add_argument("--seed", type=int)
    p_cell.add_argument("--output-dir", dest="output_dir")
    p_cell.add_argument("--corrupt", choices=["none", "margin", "inset"], default="none")
    p_cell.add_argument("--quasiconvexity", action="store_true")

    sub.add_parser("list-benchmarks", help="list registered benchmarks")
    return parser


@handle_command_errors("configure")
def dispatch(args: argparse.Namespace) -> int:
    if args.command == "run":
        return cmd_run(experiment_from_args(args))
    if args.command == "sweep":
        config = load_config(
            args.config,
            SweepConfig,
            {
                "benchmarks": args.benchmarks,
                "schedules": args.schedules,
                "policies": args.policies,
                "seeds": args.seeds,
                "K": args.K,
                "tol": args.tol,
                "jobs": args.jobs,
                "traces": args.traces,
                "output_dir": args.output_dir,
            },
        )
        return cmd_sweep(config)
    if args.command == "bound":
        return cmd_bound(experiment_from_args(args), args.fit_seeds, args.sigma)
    if args.command == "kl":
        return cmd_kl(experiment_from_args(args))
    if args.command == "indices":
        return cmd_indices(experiment_from_args(args))
    if args.command == "cellcheck":
        config = load_config(
            args.config,
            CellCheckConfig,
            {"cell": args.cell, "t": args.t, "samples": args.samples, "seed": args.seed, "output_dir": args.output_dir},
        )
        return cmd_cellcheck(config, args.corrupt, args.quasiconvexity)
    if args.command == "list-benchmarks":
        return cmd_list_benchmarks()
    raise ConfigurationError("no command given; see --help", config_key="command")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    kwargs = {k: v for k, v in (("level", args.log_level), ("fmt", args.log_format)) if v is not None}
    configure_logging(**kwargs)
    validate_settings(strict=True)
    if args.show_config:
        print(json.dumps(get_environment_info(), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_FAILURE
    logger.debug("command started", command=args.command)
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
