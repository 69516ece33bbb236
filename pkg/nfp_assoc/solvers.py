"""
SC-to-NFP association solvers.

Three ways to fill the association matrix of an AssociationInstance:

* ``cmca``  centralized greedy over a global link list
* ``dmca``  distributed greedy in four steps (request, grant, recover, trim)
* ``exact`` depth-first branch and bound, the optimal benchmark

Candidate links are scored by w_b * b_ij + w_r * r_ij (lower is better).
Ties always go to the lowest SC index, then the lowest NFP index.
"""

from __future__ import annotations

import math
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
import structlog

from nfp_assoc.channel import LinkMetrics
from nfp_assoc.errors import AuditError, ConfigError
from nfp_assoc.instance import AssociationInstance, AssociationMatrix

logger = structlog.get_logger(__name__)

DEFAULT_NODE_BUDGET = 10 ** 8
COUNTER_RTOL = 1e-9
# Slack added to residual capacities inside the exact solver's bound only.
BOUND_EPS = 1e-9
EXACT_BOUNDS = ("relaxed", "cardinality")


@dataclass(frozen=True)
class ScoreWeights:
    w_bandwidth: float = 1.0
    w_rate: float = 1.0

    def __post_init__(self):
        if self.w_bandwidth < 0 or self.w_rate < 0:
            raise ConfigError(f"score weights must be >= 0, got {self.w_bandwidth}, {self.w_rate}")
        if self.w_bandwidth == 0 and self.w_rate == 0:
            raise ConfigError("score weights must not both be 0")

    @classmethod
    def parse(cls, text: str) -> "ScoreWeights":
        """Parse the CLI form ``"WB,WR"``."""
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 2:
            raise ConfigError(f"weights must look like 'WB,WR', got {text!r}")
        try:
            return cls(float(parts[0]), float(parts[1]))
        except ValueError as e:
            raise ConfigError(f"weights must be numeric, got {text!r}") from e

    def __str__(self) -> str:
        return f"{self.w_bandwidth:g},{self.w_rate:g}"


def score(i: int, j: int, metrics: LinkMetrics, weights: ScoreWeights) -> float:
    return weights.w_bandwidth * float(metrics.bandwidth[i, j]) + weights.w_rate * float(metrics.rate[i, j])


def score_matrix(inst: AssociationInstance, weights: ScoreWeights) -> np.ndarray:
    """Scores of every pair, +inf where the pair is not eligible."""
    m = inst.metrics
    with np.errstate(invalid="ignore"):
        raw = weights.w_bandwidth * m.bandwidth + weights.w_rate * m.rate
    return np.where(inst.eligible, raw, np.inf)


@dataclass(frozen=True)
class SolverOptions:
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    step2: Literal["break", "skip"] = "break"
    variant: Literal["pseudocode", "prose"] = "pseudocode"
    node_budget: int = DEFAULT_NODE_BUDGET
    exact_bound: Literal["relaxed", "cardinality"] = "relaxed"
    audit_counters: bool = False

    def __post_init__(self):
        if self.step2 not in ("break", "skip"):
            raise ConfigError(f"step2 must be 'break' or 'skip', got {self.step2!r}")
        if self.variant not in ("pseudocode", "prose"):
            raise ConfigError(f"variant must be 'pseudocode' or 'prose', got {self.variant!r}")
        if self.node_budget < 1:
            raise ConfigError(f"node_budget must be >= 1, got {self.node_budget}")
        if self.exact_bound not in EXACT_BOUNDS:
            raise ConfigError(f"exact_bound must be one of {EXACT_BOUNDS}, got {self.exact_bound!r}")


class SolverCounters:
    """Running totals C_Nl^j, C_b^j and C_r kept alongside the association matrix."""

    def __init__(self, n_d: int):
        self.links_used: List[int] = [0] * n_d
        self.bandwidth_used: List[float] = [0.0] * n_d
        self.total_rate = 0.0

    @classmethod
    def from_matrix(cls, inst: AssociationInstance, a: np.ndarray) -> "SolverCounters":
        counters = cls(inst.n_d)
        mask = a.astype(bool)
        counters.links_used = mask.sum(axis=0).astype(int).tolist()
        counters.bandwidth_used = np.where(mask, inst.metrics.bandwidth, 0.0).sum(axis=0).tolist()
        counters.total_rate = float(np.where(mask, inst.metrics.rate, 0.0).sum())
        return counters

    def add(self, j: int, bandwidth: float, rate: float) -> None:
        self.links_used[j] += 1
        self.bandwidth_used[j] += bandwidth
        self.total_rate += rate

    def remove(self, j: int, bandwidth: float, rate: float) -> None:
        self.links_used[j] -= 1
        self.bandwidth_used[j] -= bandwidth
        self.total_rate -= rate

    def audit(self, inst: AssociationInstance, a: np.ndarray) -> None:
        """Raise AuditError if the running totals drifted from the matrix."""
        fresh = SolverCounters.from_matrix(inst, a)
        if (
            not np.array_equal(fresh.links_used, self.links_used)
            or not np.allclose(fresh.bandwidth_used, self.bandwidth_used, rtol=COUNTER_RTOL, atol=1e-6)
            or not math.isclose(fresh.total_rate, self.total_rate, rel_tol=COUNTER_RTOL, abs_tol=1e-6)
        ):
            raise AuditError(
                f"solver counters drifted: links {self.links_used} vs {fresh.links_used}, "
                f"rate {self.total_rate} vs {fresh.total_rate}"
            )


class _Association:
    """
    Mutable matrix plus counters; every mutation keeps both in step.

    Metrics and limits are copied to plain lists once, the greedy loops read
    them per candidate.
    """

    def __init__(self, inst: AssociationInstance, audit: bool):
        self.inst = inst
        self.a = np.zeros((inst.n_sc, inst.n_d), dtype=np.int8)
        self.assigned: List[int] = [-1] * inst.n_sc
        self.counters = SolverCounters(inst.n_d)
        self.audit = audit
        self.rate = inst.metrics.rate.tolist()
        self.bandwidth = inst.metrics.bandwidth.tolist()
        self.rate_limit = float(inst.limits.backhaul_rate)
        self.bw_limit = inst.limits.nfp_bandwidth
        self.link_limit = inst.limits.nfp_max_links

    def associate(self, i: int, j: int) -> None:
        self.a[i, j] = 1
        self.assigned[i] = j
        self.counters.add(j, self.bandwidth[i][j], self.rate[i][j])
        if self.audit:
            self.counters.audit(self.inst, self.a)

    def dissociate(self, i: int, j: int) -> None:
        self.a[i, j] = 0
        self.assigned[i] = -1
        self.counters.remove(j, self.bandwidth[i][j], self.rate[i][j])
        if self.audit:
            self.counters.audit(self.inst, self.a)

    def nfp_can_take(self, i: int, j: int) -> bool:
        c = self.counters
        return (c.links_used[j] < self.link_limit[j]
                and c.bandwidth_used[j] + self.bandwidth[i][j] <= self.bw_limit[j])

    def fits(self, i: int, j: int) -> bool:
        """Link slack, bandwidth and backhaul rate all admit pair (i, j)."""
        return self.counters.total_rate + self.rate[i][j] <= self.rate_limit and self.nfp_can_take(i, j)

    def pairs(self) -> List[Tuple[int, int]]:
        return [(i, j) for i, j in enumerate(self.assigned) if j >= 0]

    def result(self) -> AssociationMatrix:
        return AssociationMatrix(self.a)


def _links_by_score(scores: np.ndarray) -> List[Tuple[int, int]]:
    """Finite-score pairs in ascending (score, SC, NFP) order."""
    ii, jj = np.nonzero(np.isfinite(scores))
    order = np.lexsort((jj, ii, scores[ii, jj]))
    return list(zip(ii[order].tolist(), jj[order].tolist()))


def solve_cmca(inst: AssociationInstance, weights: ScoreWeights = ScoreWeights(),
               audit: bool = False) -> AssociationMatrix:
    """
    Centralized greedy.

    Walks the eligible link list once in ascending score. The first link whose
    rate would overflow the backhaul ends the run; a link the NFP cannot take
    removes every link of that NFP, an accepted link removes the SC's others.
    Removed links are skipped in place rather than deleted from the list.
    """
    state = _Association(inst, audit)
    c = state.counters
    served = [False] * inst.n_sc
    dropped = [False] * inst.n_d

    for i, j in _links_by_score(score_matrix(inst, weights)):
        if served[i] or dropped[j]:
            continue
        if c.total_rate + state.rate[i][j] > state.rate_limit:
            break
        if state.nfp_can_take(i, j):
            state.associate(i, j)
            served[i] = True
        else:
            dropped[j] = True
    return state.result()


def _dmca_request(scores: np.ndarray, rows: List[List[float]]) -> Dict[int, List[int]]:
    """Step 1: each SC with an eligible link requests its min-score NFP."""
    requests: Dict[int, List[int]] = {j: [] for j in range(scores.shape[1])}
    if scores.shape[1] == 0:
        return requests
    for i, j in enumerate(np.argmin(scores, axis=1).tolist()):
        if rows[i][j] < math.inf:
            requests[j].append(i)
    return requests


def _dmca_grant(state: _Association, rows: List[List[float]], requests: Dict[int, List[int]],
                step2: str) -> None:
    """Step 2: each NFP grants its cheapest requests within link and bandwidth limits."""
    c = state.counters
    for j, requesters in requests.items():
        bw_limit, link_limit = state.bw_limit[j], state.link_limit[j]
        for i in sorted(requesters, key=lambda i: (rows[i][j], i)):
            if c.links_used[j] >= link_limit or c.bandwidth_used[j] >= bw_limit:
                break
            if c.bandwidth_used[j] + state.bandwidth[i][j] <= bw_limit:
                state.associate(i, j)
            elif step2 == "break":
                break


def _dmca_recover(state: _Association, rows: List[List[float]]) -> None:
    """Step 3: associate leftover SCs by ascending score while every limit holds."""
    candidates = sorted(
        (s, i, j)
        for i, assigned in enumerate(state.assigned) if assigned < 0
        for j, s in enumerate(rows[i]) if s < math.inf
    )
    # Counters only grow here, so a pair that fails once never fits later.
    for _, i, j in candidates:
        if state.assigned[i] < 0 and state.fits(i, j):
            state.associate(i, j)


def _dmca_trim(state: _Association, rows: List[List[float]], variant: str) -> None:
    """Step 4: drop associated pairs until the backhaul limit holds."""
    c, limit = state.counters, state.rate_limit
    pairs = state.pairs()

    if variant == "pseudocode":
        for i, j in sorted(pairs, key=lambda p: (-rows[p[0]][p[1]], p[0], p[1])):
            if c.total_rate <= limit:
                break
            state.dissociate(i, j)
        return

    rate = state.rate
    while c.total_rate > limit and pairs:
        by_rate = sorted(pairs, key=lambda p: (-rate[p[0]][p[1]], p[0], p[1]))
        victim = next(
            (p for p in by_rate if c.total_rate - rate[p[0]][p[1]] >= limit),
            min(pairs, key=lambda p: (rate[p[0]][p[1]], p[0], p[1])),
        )
        state.dissociate(*victim)
        pairs.remove(victim)


def solve_dmca(inst: AssociationInstance, weights: ScoreWeights = ScoreWeights(),
               step2: str = "break", variant: str = "pseudocode",
               audit: bool = False) -> AssociationMatrix:
    """
    Distributed greedy in four steps.

    Requests and grants are local to each SC and NFP. Recovery only runs while
    the backhaul has room (C_r < R) and trimming only once it is exceeded
    (C_r > R).
    """
    scores = score_matrix(inst, weights)
    rows = scores.tolist()
    state = _Association(inst, audit)

    _dmca_grant(state, rows, _dmca_request(scores, rows), step2)
    if state.counters.total_rate < state.rate_limit:
        _dmca_recover(state, rows)
    if state.counters.total_rate > state.rate_limit:
        _dmca_trim(state, rows, variant)
    return state.result()


@dataclass(frozen=True, eq=False)
class ExactSolution:
    matrix: AssociationMatrix
    proven_optimal: bool
    nodes_explored: int


class _BudgetExhausted(Exception):
    pass


class BranchAndBound:
    """
    Depth-first search over SCs in index order.

    Each node decides one SC: first the eligible NFPs in ascending score, then
    "unassigned". A node is pruned when count + bound cannot beat the
    incumbent, with bound the smallest of
      - SCs left that have any eligible link,
      - SCs left whose cheapest rates fit the residual backhaul,
      - per NFP, SCs left whose cheapest bandwidths fit the residual
        bandwidth, capped by link slack, summed over NFPs.
    Each term is at most the number of SCs left, so this prunes every node the
    plain count + remaining SCs rule prunes, and more once a limit binds.
    ``bound_kind="cardinality"`` keeps the plain rule; it returns the same
    optimum and is only practical on small instances.
    """

    def __init__(self, inst: AssociationInstance, weights: ScoreWeights = ScoreWeights(),
                 node_budget: int = DEFAULT_NODE_BUDGET, bound_kind: str = "relaxed"):
        if bound_kind not in EXACT_BOUNDS:
            raise ConfigError(f"bound_kind must be one of {EXACT_BOUNDS}, got {bound_kind!r}")
        self.inst = inst
        self.node_budget = node_budget
        self.bound_kind = bound_kind
        self.n_sc, self.n_d = inst.n_sc, inst.n_d
        self.rate = inst.metrics.rate.tolist()
        self.bandwidth = inst.metrics.bandwidth.tolist()
        self.rate_limit = float(inst.limits.backhaul_rate)
        self.bw_limit = list(inst.limits.nfp_bandwidth)
        self.link_limit = list(inst.limits.nfp_max_links)

        scores = score_matrix(inst, weights)
        self.children = [
            sorted((j for j in range(self.n_d) if inst.eligible[i, j]), key=lambda j: (scores[i, j], j))
            for i in range(self.n_sc)
        ]
        if bound_kind == "relaxed":
            self._precompute_bounds()

        self.nodes = 0
        self.best = -1
        self.best_assignment: List[int] = [-1] * self.n_sc
        self.assignment: List[int] = [-1] * self.n_sc
        self.links_used = [0] * self.n_d
        self.bandwidth_used = [0.0] * self.n_d
        self.total_rate = 0.0
        self.root_bound = 0

    def _precompute_bounds(self) -> None:
        n, eligible = self.n_sc, self.inst.eligible.tolist()
        has_link = [any(row) for row in eligible]
        # cheapest rate an SC can be served at; rates are per pair in general
        min_rate = [min((self.rate[i][j] for j in range(self.n_d) if eligible[i][j]), default=0.0)
                    for i in range(n)]

        self.suffix_eligible = [0] * (n + 1)
        for k in range(n - 1, -1, -1):
            self.suffix_eligible[k] = self.suffix_eligible[k + 1] + has_link[k]

        # Prefix sums of the sorted suffix demands, for "how many fit" queries.
        self.rate_prefix = [
            list(accumulate(sorted(min_rate[i] for i in range(k, n) if has_link[i])))
            for k in range(n + 1)
        ]
        self.bw_prefix = [
            [
                list(accumulate(sorted(self.bandwidth[i][j] for i in range(k, n) if eligible[i][j])))
                for k in range(n + 1)
            ]
            for j in range(self.n_d)
        ]

    @staticmethod
    def _how_many_fit(prefix: List[float], residual: float) -> int:
        return bisect_right(prefix, residual * (1.0 + BOUND_EPS) + BOUND_EPS)

    def bound(self, k: int) -> int:
        """Upper bound on how many of SCs k..n-1 can still be associated."""
        if self.bound_kind == "cardinality":
            return self.n_sc - k
        best = min(
            self.suffix_eligible[k],
            self._how_many_fit(self.rate_prefix[k], self.rate_limit - self.total_rate),
        )
        per_nfp = 0
        for j in range(self.n_d):
            slack = self.link_limit[j] - self.links_used[j]
            if slack > 0:
                fit = self._how_many_fit(self.bw_prefix[j][k], self.bw_limit[j] - self.bandwidth_used[j])
                per_nfp += min(slack, fit)
            if per_nfp >= best:
                return best
        return min(best, per_nfp)

    def _search(self, k: int, count: int) -> None:
        if self.nodes >= self.node_budget:
            raise _BudgetExhausted()
        self.nodes += 1
        if count > self.best:
            self.best = count
            self.best_assignment = list(self.assignment)
        if k == self.n_sc or count + self.bound(k) <= self.best:
            return

        for j in self.children[k]:
            r, b = self.rate[k][j], self.bandwidth[k][j]
            if (self.links_used[j] < self.link_limit[j]
                    and self.bandwidth_used[j] + b <= self.bw_limit[j]
                    and self.total_rate + r <= self.rate_limit):
                self.assignment[k] = j
                self.links_used[j] += 1
                self.bandwidth_used[j] += b
                self.total_rate += r
                try:
                    self._search(k + 1, count + 1)
                finally:
                    self.links_used[j] -= 1
                    self.bandwidth_used[j] -= b
                    self.total_rate -= r
                    self.assignment[k] = -1
                if self.best >= self.root_bound:
                    return
        self._search(k + 1, count)

    def solve(self) -> ExactSolution:
        self.root_bound = self.bound(0)
        proven = True
        try:
            self._search(0, 0)
        except _BudgetExhausted:
            proven = self.best >= self.root_bound
            if not proven:
                logger.warning("exact_budget_exhausted", node_budget=self.node_budget,
                               best=self.best, root_bound=self.root_bound)
        matrix = AssociationMatrix.from_assignment(self.best_assignment, self.n_d) if self.n_sc \
            else AssociationMatrix.empty(0, self.n_d)
        logger.debug("exact_solved", objective=self.best, nodes=self.nodes, proven=proven)
        return ExactSolution(matrix=matrix, proven_optimal=proven, nodes_explored=self.nodes)


def solve_exact(inst: AssociationInstance, node_budget: int = DEFAULT_NODE_BUDGET,
                weights: ScoreWeights = ScoreWeights(), bound_kind: str = "relaxed") -> ExactSolution:
    return BranchAndBound(inst, weights, node_budget, bound_kind).solve()


@dataclass(frozen=True, eq=False)
class SolveOutcome:
    matrix: AssociationMatrix
    proven_optimal: Optional[bool]  # None for the heuristics
    elapsed_s: float


def _run_cmca(inst: AssociationInstance, options: SolverOptions) -> Tuple[AssociationMatrix, Optional[bool]]:
    return solve_cmca(inst, options.weights, options.audit_counters), None


def _run_dmca(inst: AssociationInstance, options: SolverOptions) -> Tuple[AssociationMatrix, Optional[bool]]:
    return solve_dmca(inst, options.weights, options.step2, options.variant, options.audit_counters), None


def _run_exact(inst: AssociationInstance, options: SolverOptions) -> Tuple[AssociationMatrix, Optional[bool]]:
    solution = solve_exact(inst, options.node_budget, options.weights, options.exact_bound)
    return solution.matrix, solution.proven_optimal


SOLVERS: Dict[str, Callable[[AssociationInstance, SolverOptions], Tuple[AssociationMatrix, Optional[bool]]]] = {
    "cmca": _run_cmca,
    "dmca": _run_dmca,
    "exact": _run_exact,
}


def solve(solver_id: str, inst: AssociationInstance, options: SolverOptions = SolverOptions()) -> SolveOutcome:
    """
    Run one solver by id; elapsed_s covers the solver call only.
    """
    try:
        run = SOLVERS[solver_id]
    except KeyError:
        raise ConfigError(f"unknown solver {solver_id!r}, expected one of {sorted(SOLVERS)}") from None
    start = time.perf_counter()
    matrix, proven = run(inst, options)
    return SolveOutcome(matrix=matrix, proven_optimal=proven, elapsed_s=time.perf_counter() - start)
