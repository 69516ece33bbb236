"""
The association problem: limits, the binary association matrix, the
objective and a feasibility checker that recomputes every constraint from
scratch.

The checker never trusts solver bookkeeping; experiments and the CLI run it
on every solver output.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from nfp_assoc.channel import LinkMetrics, linear_to_db
from nfp_assoc.errors import DimensionMismatchError, DomainError, SweepIOError

# Relative slack tolerance; b_ij values are irrational.
FEASIBILITY_RTOL = 1e-6


@dataclass(frozen=True)
class NetworkLimits:
    backhaul_rate: float              # R, bit/s
    nfp_bandwidth: Tuple[float, ...]  # B_j, Hz
    nfp_max_links: Tuple[int, ...]    # N_l_j
    sinr_min: float                   # linear

    def __post_init__(self):
        object.__setattr__(self, "nfp_bandwidth", tuple(float(b) for b in self.nfp_bandwidth))
        object.__setattr__(self, "nfp_max_links", tuple(int(n) for n in self.nfp_max_links))
        if len(self.nfp_bandwidth) != len(self.nfp_max_links):
            raise DimensionMismatchError(
                f"{len(self.nfp_bandwidth)} bandwidth limits but {len(self.nfp_max_links)} link limits"
            )
        if not self.backhaul_rate > 0:
            raise DomainError(f"backhaul_rate must be > 0, got {self.backhaul_rate}")
        if any(not b > 0 for b in self.nfp_bandwidth):
            raise DomainError(f"nfp_bandwidth entries must be > 0, got {self.nfp_bandwidth}")
        if any(n <= 0 for n in self.nfp_max_links):
            raise DomainError(f"nfp_max_links entries must be > 0, got {self.nfp_max_links}")
        if not self.sinr_min > 0:
            raise DomainError(f"sinr_min must be > 0 (linear), got {self.sinr_min}")

    @classmethod
    def symmetric(cls, n_d: int, backhaul_rate: float, bandwidth: float, max_links: int,
                  sinr_min: float) -> "NetworkLimits":
        """Every NFP gets the same bandwidth and link limit."""
        return cls(backhaul_rate, (bandwidth,) * n_d, (max_links,) * n_d, sinr_min)

    @property
    def n_d(self) -> int:
        return len(self.nfp_bandwidth)


@dataclass(frozen=True, eq=False)
class AssociationInstance:
    metrics: LinkMetrics
    limits: NetworkLimits
    eligible: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.metrics.n_d != self.limits.n_d:
            raise DimensionMismatchError(
                f"metrics have {self.metrics.n_d} NFPs but limits describe {self.limits.n_d}"
            )
        # Eligibility is re-derived against this instance's threshold.
        eligible = self.metrics.eligible & (self.metrics.sinr >= self.limits.sinr_min)
        eligible.setflags(write=False)
        object.__setattr__(self, "eligible", eligible)

    @property
    def n_sc(self) -> int:
        return self.metrics.n_sc

    @property
    def n_d(self) -> int:
        return self.metrics.n_d

    @property
    def bandwidth_limits(self) -> np.ndarray:
        return np.asarray(self.limits.nfp_bandwidth, dtype=float)

    @property
    def link_limits(self) -> np.ndarray:
        return np.asarray(self.limits.nfp_max_links, dtype=int)


@dataclass(frozen=True, eq=False)
class AssociationMatrix:
    """Binary N_SC x N_D matrix; A[i, j] = 1 iff SC i is served by NFP j."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, ndmin=2)
        if a.ndim != 2:
            raise DimensionMismatchError(f"association matrix must be 2-D, got shape {a.shape}")
        if a.size and not ((a == 0) | (a == 1)).all():
            raise DomainError("association matrix entries must be 0 or 1")
        a = a.astype(np.int8)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @classmethod
    def empty(cls, n_sc: int, n_d: int) -> "AssociationMatrix":
        return cls(np.zeros((n_sc, n_d), dtype=np.int8))

    @classmethod
    def from_assignment(cls, assigned: Sequence[int], n_d: int) -> "AssociationMatrix":
        """Build from a per-SC NFP index vector (-1 = unassociated)."""
        a = np.zeros((len(assigned), n_d), dtype=np.int8)
        for i, j in enumerate(assigned):
            if j >= 0:
                a[i, j] = 1
        return cls(a)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.a.shape

    def assigned_nfp(self) -> np.ndarray:
        """Per-SC NFP index, -1 where the SC is unassociated."""
        if self.a.shape[1] == 0:
            return np.full(self.a.shape[0], -1, dtype=int)
        return np.where(self.a.any(axis=1), self.a.argmax(axis=1), -1)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        frame = pd.DataFrame(self.a, columns=[f"nfp_{j}" for j in range(self.a.shape[1])])
        frame.index.name = "sc"
        try:
            os.makedirs(path.parent, exist_ok=True)
            frame.to_csv(path)
        except OSError as e:
            raise SweepIOError(f"could not write association matrix to {path}: {e}") from e
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "AssociationMatrix":
        frame = pd.read_csv(path, index_col="sc")
        return cls(frame.to_numpy(dtype=np.int8).reshape(len(frame), frame.shape[1]))


class ConstraintId(str, Enum):
    RATE = "rate"
    BANDWIDTH = "bandwidth"
    SINR = "sinr"
    LINKS = "links"
    SINGLE_ASSOC = "single-assoc"


@dataclass(frozen=True)
class Violation:
    constraint: ConstraintId
    indices: Tuple[int, ...]

    def __str__(self) -> str:
        return f"{self.constraint.value}{list(self.indices)}"


@dataclass(frozen=True, eq=False)
class FeasibilityReport:
    violated: List[Violation]
    rate_slack: float            # bit/s
    bandwidth_slack: np.ndarray  # Hz per NFP
    link_slack: np.ndarray       # links per NFP

    @property
    def feasible(self) -> bool:
        return not self.violated

    def summary(self) -> str:
        if self.feasible:
            return "feasible"
        return "infeasible: " + ", ".join(str(v) for v in self.violated)


def objective(a: AssociationMatrix) -> int:
    """Number of associated SCs."""
    return int(a.a.sum())


def _within(used: float, limit: float) -> bool:
    return used <= limit + FEASIBILITY_RTOL * abs(limit)


def check_feasibility(inst: AssociationInstance, a: AssociationMatrix) -> FeasibilityReport:
    if a.shape != (inst.n_sc, inst.n_d):
        raise DimensionMismatchError(
            f"association matrix {a.shape} does not match instance ({inst.n_sc}, {inst.n_d})"
        )
    A = a.a.astype(bool)
    limits = inst.limits
    violated: List[Violation] = []

    rate_used = float(np.where(A, inst.metrics.rate, 0.0).sum())
    if not _within(rate_used, limits.backhaul_rate):
        violated.append(Violation(ConstraintId.RATE, ()))

    # np.where keeps inf * 0 out of the sum for unassociated pairs.
    bw_used = np.where(A, inst.metrics.bandwidth, 0.0).sum(axis=0)
    bw_limit = inst.bandwidth_limits
    for j in range(inst.n_d):
        if not _within(bw_used[j], bw_limit[j]):
            violated.append(Violation(ConstraintId.BANDWIDTH, (j,)))

    for i, j in zip(*np.nonzero(A & ~(inst.metrics.sinr >= limits.sinr_min))):
        violated.append(Violation(ConstraintId.SINR, (int(i), int(j))))

    links_used = A.sum(axis=0)
    link_limit = inst.link_limits
    for j in np.nonzero(links_used > link_limit)[0]:
        violated.append(Violation(ConstraintId.LINKS, (int(j),)))

    for i in np.nonzero(A.sum(axis=1) > 1)[0]:
        violated.append(Violation(ConstraintId.SINGLE_ASSOC, (int(i),)))

    return FeasibilityReport(
        violated=violated,
        rate_slack=limits.backhaul_rate - rate_used,
        bandwidth_slack=bw_limit - bw_used,
        link_slack=link_limit - links_used,
    )


def write_snapshot_csv(scenario, inst: AssociationInstance, a: AssociationMatrix,
                       path: Union[str, Path]) -> Path:
    """One row per SC: position, requested rate, serving NFP and that link's SINR and bandwidth."""
    if scenario.n_sc != inst.n_sc or a.shape != (inst.n_sc, inst.n_d):
        raise DimensionMismatchError("scenario, instance and association matrix disagree on size")
    assigned = a.assigned_nfp()
    rows = []
    for i, (pos, nfp) in enumerate(zip(scenario.sc_positions, assigned)):
        served = nfp >= 0
        rows.append({
            "sc": i,
            "x": pos.x,
            "y": pos.y,
            "rate_bps": scenario.sc_rates[i],
            "nfp": int(nfp),
            "sinr_db": linear_to_db(inst.metrics.sinr[i, nfp]) if served else np.nan,
            "bandwidth_hz": inst.metrics.bandwidth[i, nfp] if served else np.nan,
        })
    frame = pd.DataFrame(rows, columns=["sc", "x", "y", "rate_bps", "nfp", "sinr_db", "bandwidth_hz"])
    path = Path(path)
    try:
        os.makedirs(path.parent, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.6f")
    except OSError as e:
        raise SweepIOError(f"could not write snapshot to {path}: {e}") from e
    return path
