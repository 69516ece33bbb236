"""
Command-line front end.

    generate  draw a scenario and save it as JSON
    solve     associate SCs to NFPs on one scenario and write the matrix CSV
    sweep     run a rate, bandwidth or timing experiment and write its CSV
    version   print the package version

Every subcommand accepts --config PATH plus one flag per config field.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd
import structlog
from dotenv import load_dotenv

from nfp_assoc import __version__
from nfp_assoc.channel import compute_link_metrics, coverage_radius
from nfp_assoc.config import RunConfig, add_config_flags, load_config, overrides_from_args
from nfp_assoc.errors import AuditError, NfpAssocError
from nfp_assoc.experiments import SweepKind, run_sweep, sweep_frame, timing_summary, write_sweep_csv
from nfp_assoc.instance import (
    AssociationInstance,
    FeasibilityReport,
    check_feasibility,
    objective,
    write_snapshot_csv,
)
from nfp_assoc.log import configure_logging
from nfp_assoc.scenario import Scenario, build_scenario, resolve_nfp_min_sep
from nfp_assoc.solvers import SolveOutcome, SolverOptions, solve

logger = structlog.get_logger(__name__)

# Sweeps fail when more than this share of scenario seeds could not be generated.
MAX_FAILED_SEED_FRACTION = 0.01


def _suffixed(path: Path, solver_id: str, many: bool) -> Path:
    return path.with_name(f"{path.stem}_{solver_id}{path.suffix}") if many else path


def load_or_build_scenario(config: RunConfig) -> Scenario:
    if config.output.scenario:
        try:
            return Scenario.load(config.output.scenario)
        except OSError as e:
            raise NfpAssocError(f"cannot read scenario {config.output.scenario}: {e}") from e
    return build_scenario(config.scenario.to_scenario_config(), config.environment.to_env())


def compare_solvers(inst: AssociationInstance, solver_ids: List[str],
                    options: SolverOptions) -> Dict[str, Tuple[SolveOutcome, FeasibilityReport]]:
    """Run each solver on the same instance; every output is audited before it is reported."""
    outcomes = {}
    for solver_id in solver_ids:
        outcome = solve(solver_id, inst, options)
        report = check_feasibility(inst, outcome.matrix)
        if not report.feasible:
            raise AuditError(f"{solver_id} produced an infeasible association: {report.summary()}")
        outcomes[solver_id] = (outcome, report)
    return outcomes


def summary_frame(inst: AssociationInstance,
                  outcomes: Dict[str, Tuple[SolveOutcome, FeasibilityReport]]) -> pd.DataFrame:
    rows = []
    for solver_id, (outcome, report) in outcomes.items():
        count = objective(outcome.matrix)
        rows.append({
            "solver": solver_id,
            "associated": count,
            "unassociated": inst.n_sc - count,
            "rate_slack_gbps": report.rate_slack / 1e9,
            "min_bw_slack_mhz": float(report.bandwidth_slack.min()) / 1e6 if inst.n_d else float("nan"),
            "min_link_slack": int(report.link_slack.min()) if inst.n_d else 0,
            "ms": outcome.elapsed_s * 1e3,
            "proven": "-" if outcome.proven_optimal is None else outcome.proven_optimal,
        })
    return pd.DataFrame(rows)


def cmd_generate(config: RunConfig) -> Path:
    scenario_config = config.scenario.to_scenario_config()
    env = config.environment.to_env()
    scenario = build_scenario(scenario_config, env)
    out = Path(config.output.out or f"data/scenario_{scenario_config.seed}.json")
    scenario.save(out)

    print(f"Scenario seed {scenario.seed_used} saved to {out}")
    print(f"  small cells: {scenario.n_sc}")
    print(f"  NFPs:        {scenario.n_d}")
    print(f"  sum rate:    {scenario.total_rate() / 1e9:.3f} Gbps")
    print(f"  NFP coverage radius: {coverage_radius(scenario_config.pl_max, scenario_config.nfp_height, env):.1f} m"
          f" (NFP separation {resolve_nfp_min_sep(scenario_config, env):.1f} m)")
    return out


def cmd_solve(config: RunConfig) -> Dict[str, int]:
    env = config.environment.to_env()
    scenario = load_or_build_scenario(config)
    limits = config.limits.to_limits(scenario.n_d)
    inst = AssociationInstance(compute_link_metrics(scenario, env, limits.sinr_min), limits)

    solver_ids = config.solver.solver_ids()
    outcomes = compare_solvers(inst, solver_ids, config.solver.to_solver_options())
    print(f"Scenario seed {scenario.seed_used}: {scenario.n_sc} SCs, {scenario.n_d} NFPs, "
          f"sum rate {scenario.total_rate() / 1e9:.3f} Gbps")
    print(summary_frame(inst, outcomes).to_string(index=False, float_format=lambda v: f"{v:.3f}"))

    many = len(solver_ids) > 1
    out = Path(config.output.out or "output/association.csv")
    for solver_id, (outcome, _) in outcomes.items():
        written = outcome.matrix.to_csv(_suffixed(out, solver_id, many))
        print(f"Association matrix ({solver_id}): {written}")
        if config.output.snapshot:
            snapshot = write_snapshot_csv(scenario, inst, outcome.matrix,
                                          _suffixed(Path(config.output.snapshot), solver_id, many))
            print(f"Snapshot ({solver_id}): {snapshot}")
    counts = {solver_id: objective(outcome.matrix) for solver_id, (outcome, _) in outcomes.items()}
    logger.info("solve_finished", seed=scenario.seed_used, **counts)
    return counts


def cmd_sweep(config: RunConfig, progress: bool = True) -> int:
    spec = config.to_sweep_spec()
    result = run_sweep(spec, progress=progress)
    out = write_sweep_csv(result, config.output.out or f"output/{spec.kind.value}.csv")

    print(sweep_frame(result).to_string(index=False))
    if spec.kind is SweepKind.TIMING:
        for row in timing_summary(result):
            reduction = "" if row.reduction_vs_exact_pct is None else \
                f"  ({row.reduction_vs_exact_pct:.2f}% less than exact)"
            print(f"  {row.solver:>6}: mean {row.mean_ms:.4f} ms, median {row.median_ms:.4f} ms{reduction}")
    print(f"Results written to {out}")

    if result.failed_seeds:
        print(f"{len(result.failed_seeds)} of {len(result.seeds)} scenario seeds failed: {result.failed_seeds}")
    if result.failure_fraction() > MAX_FAILED_SEED_FRACTION:
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", default=None, help="JSON run-config file")
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info logs, -vv for debug logs")
    add_config_flags(common)

    parser = argparse.ArgumentParser(
        description="Associate small cells with networked flying platforms",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], allow_abbrev=False,
                   help="Generate a random scenario and save it as JSON")
    sub.add_parser("solve", parents=[common], allow_abbrev=False,
                   help="Solve one scenario (--scenario PATH, or generate from --seed)")
    sweep = sub.add_parser("sweep", parents=[common], allow_abbrev=False,
                           help="Run an experiment sweep described by a config file")
    sweep.add_argument("spec", nargs="?", default=None, help="sweep config file (same as --config)")
    sub.add_parser("version", help="Print the package version")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(f"nfp_assoc {__version__}")
        return 0

    configure_logging(args.verbose)
    try:
        config = load_config(getattr(args, "spec", None) or args.config, overrides_from_args(args))
        if args.command == "generate":
            cmd_generate(config)
        elif args.command == "solve":
            cmd_solve(config)
        elif args.command == "sweep":
            return cmd_sweep(config)
    except NfpAssocError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0
