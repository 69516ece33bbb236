"""
Batch experiments over random scenarios.

* rate_ratio       % unassociated SCs vs R_r = R / sum of requested rates
* bandwidth_ratio  % unassociated SCs vs R_b = B / reference NFP bandwidth
* timing           per-solver run time of the solve call

Scenario seeds are base_seed + k. Seeds are evaluated in worker processes
and aggregated in seed order, so results do not depend on the worker count.
"""

from __future__ import annotations

import os
import statistics
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from scipy import stats
from tqdm import tqdm

from nfp_assoc.channel import EnvironmentParams, compute_link_metrics
from nfp_assoc.errors import AuditError, ConfigError, GenerationError, SweepIOError
from nfp_assoc.instance import AssociationInstance, NetworkLimits, check_feasibility, objective
from nfp_assoc.scenario import Scenario, ScenarioConfig, build_scenario
from nfp_assoc.solvers import SOLVERS, SolverOptions, solve

logger = structlog.get_logger(__name__)

THREADS_ENV = "NFP_ASSOC_THREADS"
SWEEP_COLUMNS = ["kind", "ratio", "solver", "mean_pct_unassoc", "stderr", "n_scenarios"]
TIMING_COLUMNS = ["solver", "scenario_seed", "median_ms", "reps"]
CSV_FLOAT_FORMAT = "%.6f"


class SweepKind(str, Enum):
    RATE_RATIO = "rate_ratio"
    BANDWIDTH_RATIO = "bandwidth_ratio"
    TIMING = "timing"


@dataclass(frozen=True)
class SweepSpec:
    kind: SweepKind
    ratio_grid: Tuple[float, ...]
    n_scenarios: int
    base_config: ScenarioConfig
    base_limits: NetworkLimits
    solvers: Tuple[str, ...] = ("cmca", "dmca", "exact")
    env: EnvironmentParams = field(default_factory=EnvironmentParams)
    solver_options: SolverOptions = field(default_factory=SolverOptions)
    repetitions: int = 5
    workers: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SweepKind(self.kind))
        object.__setattr__(self, "ratio_grid", tuple(float(r) for r in self.ratio_grid))
        object.__setattr__(self, "solvers", tuple(self.solvers))
        grid = self.ratio_grid
        if any(r <= 0 for r in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"ratio grid must be strictly increasing and > 0, got {list(grid)}")
        if self.n_scenarios < 1:
            raise ConfigError(f"n_scenarios must be >= 1, got {self.n_scenarios}")
        if self.base_config.n_sc < 1:
            raise ConfigError("sweeps need at least one small cell per scenario")
        if self.base_limits.n_d != self.base_config.n_d:
            raise ConfigError(
                f"limits describe {self.base_limits.n_d} NFPs, scenarios have {self.base_config.n_d}"
            )
        unknown = [s for s in self.solvers if s not in SOLVERS]
        if unknown or not self.solvers:
            raise ConfigError(f"unknown solver ids {unknown}, expected some of {sorted(SOLVERS)}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")

    @property
    def weights(self):
        return self.solver_options.weights

    @property
    def seeds(self) -> List[int]:
        return [self.base_config.seed + k for k in range(self.n_scenarios)]


@dataclass(frozen=True)
class SweepPoint:
    ratio: float
    solver: str
    mean_pct_unassoc: float
    stderr: float
    n_scenarios: int
    n_unproven: int = 0


@dataclass(frozen=True)
class TimingSample:
    solver: str
    scenario_seed: int
    median_ms: float
    reps: int


@dataclass
class SweepResult:
    kind: SweepKind
    points: List[SweepPoint] = field(default_factory=list)
    timings: List[TimingSample] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    failed_seeds: List[int] = field(default_factory=list)

    def failure_fraction(self) -> float:
        return len(self.failed_seeds) / len(self.seeds) if self.seeds else 0.0

    def point(self, ratio: float, solver: str) -> SweepPoint:
        for p in self.points:
            if p.solver == solver and p.ratio == ratio:
                return p
        raise KeyError((ratio, solver))

    def curve(self, solver: str) -> List[float]:
        """Mean % unassociated along the grid for one solver."""
        return [p.mean_pct_unassoc for p in sorted(self.points, key=lambda p: p.ratio) if p.solver == solver]


@dataclass(frozen=True)
class _SeedOutcome:
    seed: int
    pct: Dict[Tuple[float, str], float] = field(default_factory=dict)
    proven: Dict[Tuple[float, str], Optional[bool]] = field(default_factory=dict)
    error: Optional[str] = None


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: requested (default cpu count), capped by the cpu count and NFP_ASSOC_THREADS."""
    cpus = os.cpu_count() or 1
    workers = min(requested or cpus, cpus)
    cap = os.getenv(THREADS_ENV)
    if cap:
        try:
            workers = min(workers, int(cap))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, workers)


def pct_unassociated(n_sc: int, associated: int) -> float:
    return 100.0 * (n_sc - associated) / n_sc


def bandwidth_reference(scenario: Scenario, inst: AssociationInstance) -> float:
    """
    Largest per-NFP bandwidth demand when every SC goes to its nearest
    eligible NFP (horizontal distance, ties to the lowest index).
    """
    if inst.n_d == 0:
        return 0.0
    sc_xy = np.array([[p.x, p.y] for p in scenario.sc_positions], dtype=float).reshape(-1, 2)
    nfp_xy = np.array([[p.x, p.y] for p in scenario.nfp_positions], dtype=float).reshape(-1, 2)
    dist = np.hypot(sc_xy[:, None, 0] - nfp_xy[None, :, 0], sc_xy[:, None, 1] - nfp_xy[None, :, 1])
    dist = np.where(inst.eligible, dist, np.inf)
    nearest = np.argmin(dist, axis=1)
    has_link = inst.eligible.any(axis=1)
    demand = np.zeros(inst.n_d)
    for i in np.nonzero(has_link)[0]:
        demand[nearest[i]] += inst.metrics.bandwidth[i, nearest[i]]
    return float(demand.max())


def _solve_audited(solver_id: str, inst: AssociationInstance, options: SolverOptions, seed: int):
    outcome = solve(solver_id, inst, options)
    report = check_feasibility(inst, outcome.matrix)
    if not report.feasible:
        raise AuditError(f"{solver_id} returned an infeasible association on seed {seed}: {report.summary()}")
    return outcome


def _sweep_limits(spec: SweepSpec, ratio: float, scenario: Scenario, inst: AssociationInstance) -> NetworkLimits:
    base = spec.base_limits
    if spec.kind is SweepKind.RATE_RATIO:
        return replace(base, backhaul_rate=ratio * scenario.total_rate())
    reference = bandwidth_reference(scenario, inst)
    if reference <= 0:
        # No SC has an eligible link; any positive B gives the same result.
        reference = 1.0
    return replace(base, nfp_bandwidth=(ratio * reference,) * base.n_d)


def _evaluate_seed(spec: SweepSpec, seed: int) -> _SeedOutcome:
    """All grid points and solvers on one scenario. Runs in a worker process."""
    try:
        scenario = build_scenario(replace(spec.base_config, seed=seed), spec.env)
    except GenerationError as e:
        return _SeedOutcome(seed=seed, error=str(e))

    metrics = compute_link_metrics(scenario, spec.env, spec.base_limits.sinr_min)
    base_inst = AssociationInstance(metrics, spec.base_limits)
    outcome = _SeedOutcome(seed=seed)
    for ratio in spec.ratio_grid:
        inst = AssociationInstance(metrics, _sweep_limits(spec, ratio, scenario, base_inst))
        for solver_id in spec.solvers:
            result = _solve_audited(solver_id, inst, spec.solver_options, seed)
            outcome.pct[(ratio, solver_id)] = pct_unassociated(scenario.n_sc, objective(result.matrix))
            outcome.proven[(ratio, solver_id)] = result.proven_optimal
    return outcome


def _collect(spec: SweepSpec, progress: bool) -> Dict[int, _SeedOutcome]:
    seeds = spec.seeds
    workers = min(resolve_workers(spec.workers), len(seeds))
    outcomes: Dict[int, _SeedOutcome] = {}
    desc = f"{spec.kind.value} sweep"

    with tqdm(total=len(seeds), desc=desc, disable=not progress) as pbar:
        if workers <= 1:
            for seed in seeds:
                outcomes[seed] = _evaluate_seed(spec, seed)
                if outcomes[seed].error:
                    pbar.write(f"Failed seed {seed}: {outcomes[seed].error}")
                pbar.update(1)
            return outcomes

        with ProcessPoolExecutor(max_workers=workers) as executor:
            future_to_seed = {executor.submit(_evaluate_seed, spec, seed): seed for seed in seeds}
            for future in as_completed(future_to_seed):
                outcome = future.result()
                outcomes[outcome.seed] = outcome
                if outcome.error:
                    pbar.write(f"Failed seed {outcome.seed}: {outcome.error}")
                pbar.update(1)
    return outcomes


def _standard_error(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(stats.sem(values))


def _aggregate(spec: SweepSpec, outcomes: Dict[int, _SeedOutcome]) -> SweepResult:
    result = SweepResult(kind=spec.kind, seeds=spec.seeds)
    ok = []
    for seed in spec.seeds:
        outcome = outcomes[seed]
        if outcome.error:
            result.failed_seeds.append(seed)
            logger.warning("sweep_seed_skipped", seed=seed, reason=outcome.error)
        else:
            ok.append(outcome)

    for ratio in spec.ratio_grid:
        for solver_id in sorted(spec.solvers):
            values = [o.pct[(ratio, solver_id)] for o in ok]
            unproven = sum(1 for o in ok if o.proven[(ratio, solver_id)] is False)
            result.points.append(SweepPoint(
                ratio=ratio,
                solver=solver_id,
                mean_pct_unassoc=float(np.mean(values)) if values else float("nan"),
                stderr=_standard_error(values),
                n_scenarios=len(values),
                n_unproven=unproven,
            ))
    return result


def _run_ratio_sweep(spec: SweepSpec, expected: SweepKind, progress: bool) -> SweepResult:
    if spec.kind is not expected:
        raise ConfigError(f"expected a {expected.value} sweep, got {spec.kind.value}")
    logger.info("sweep_started", kind=spec.kind.value, grid=list(spec.ratio_grid),
                scenarios=spec.n_scenarios, solvers=list(spec.solvers))
    result = _aggregate(spec, _collect(spec, progress))
    logger.info("sweep_finished", kind=spec.kind.value, failed=len(result.failed_seeds))
    return result


def run_rate_sweep(spec: SweepSpec, progress: bool = False) -> SweepResult:
    """Vary R = R_r * (sum of requested rates) per scenario; B and N_l stay fixed."""
    return _run_ratio_sweep(spec, SweepKind.RATE_RATIO, progress)


def run_bandwidth_sweep(spec: SweepSpec, progress: bool = False) -> SweepResult:
    """Vary B = R_b * bandwidth_reference per scenario; R and N_l stay fixed."""
    return _run_ratio_sweep(spec, SweepKind.BANDWIDTH_RATIO, progress)


def run_timing(spec: SweepSpec, progress: bool = False) -> SweepResult:
    """
    Median solve time per (solver, scenario) over spec.repetitions calls.

    Runs sequentially in this process; scenario and metric construction is
    not timed.
    """
    if spec.kind is not SweepKind.TIMING:
        raise ConfigError(f"expected a timing sweep, got {spec.kind.value}")
    logger.info("sweep_started", kind=spec.kind.value, scenarios=spec.n_scenarios,
                solvers=list(spec.solvers), repetitions=spec.repetitions)
    result = SweepResult(kind=spec.kind, seeds=spec.seeds)

    for seed in tqdm(spec.seeds, desc="timing", disable=not progress):
        try:
            scenario = build_scenario(replace(spec.base_config, seed=seed), spec.env)
        except GenerationError as e:
            result.failed_seeds.append(seed)
            logger.warning("sweep_seed_skipped", seed=seed, reason=str(e))
            continue
        inst = AssociationInstance(compute_link_metrics(scenario, spec.env, spec.base_limits.sinr_min),
                                   spec.base_limits)
        for solver_id in spec.solvers:
            _solve_audited(solver_id, inst, spec.solver_options, seed)
            elapsed = [solve(solver_id, inst, spec.solver_options).elapsed_s for _ in range(spec.repetitions)]
            result.timings.append(TimingSample(
                solver=solver_id,
                scenario_seed=seed,
                median_ms=1e3 * statistics.median(elapsed),
                reps=spec.repetitions,
            ))
    logger.info("sweep_finished", kind=spec.kind.value, failed=len(result.failed_seeds))
    return result


def run_sweep(spec: SweepSpec, progress: bool = False) -> SweepResult:
    runners = {
        SweepKind.RATE_RATIO: run_rate_sweep,
        SweepKind.BANDWIDTH_RATIO: run_bandwidth_sweep,
        SweepKind.TIMING: run_timing,
    }
    return runners[spec.kind](spec, progress=progress)


@dataclass(frozen=True)
class TimingSummary:
    solver: str
    mean_ms: float
    median_ms: float
    reduction_vs_exact_pct: Optional[float]


def timing_summary(result: SweepResult) -> List[TimingSummary]:
    """
    Mean and median of the per-scenario medians per solver, and the mean
    run-time reduction relative to exact.
    """
    by_solver: Dict[str, List[float]] = {}
    for sample in result.timings:
        by_solver.setdefault(sample.solver, []).append(sample.median_ms)
    means = {solver: float(np.mean(values)) for solver, values in by_solver.items()}
    exact = means.get("exact")
    return [
        TimingSummary(
            solver=solver,
            mean_ms=mean,
            median_ms=float(statistics.median(by_solver[solver])),
            reduction_vs_exact_pct=100.0 * (1.0 - mean / exact) if exact else None,
        )
        for solver, mean in sorted(means.items())
    ]


def sweep_frame(result: SweepResult) -> pd.DataFrame:
    if result.kind is SweepKind.TIMING:
        rows = sorted(result.timings, key=lambda t: (t.solver, t.scenario_seed))
        return pd.DataFrame([[t.solver, t.scenario_seed, t.median_ms, t.reps] for t in rows],
                            columns=TIMING_COLUMNS)
    rows = sorted(result.points, key=lambda p: (p.ratio, p.solver))
    return pd.DataFrame(
        [[result.kind.value, p.ratio, p.solver, p.mean_pct_unassoc, p.stderr, p.n_scenarios] for p in rows],
        columns=SWEEP_COLUMNS,
    )


def write_sweep_csv(result: SweepResult, path) -> Path:
    path = Path(path)
    try:
        os.makedirs(path.parent, exist_ok=True)
        sweep_frame(result).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise SweepIOError(f"could not write sweep results to {path}: {e}") from e
    logger.info("sweep_written", path=str(path), kind=result.kind.value)
    return path
