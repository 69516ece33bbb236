"""
Air-to-ground channel model between small cells (SCs) on the ground and
networked flying platforms (NFPs) hovering at a common height.

Implements:
- LoS probability as a sigmoid of the elevation angle
- Average path loss (free-space term plus LoS/NLoS excess losses)
- Inversion of the path loss to a horizontal distance
- Received power, SINR and spectral efficiency
- Per-pair link metrics consumed by the association solvers

All matrices are stored in linear units; dB only appears at the I/O
boundary (config values, CSV columns).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence, Union

import numpy as np
import structlog
from scipy import constants
from scipy.optimize import bisect
from scipy.spatial.distance import cdist

from nfp_assoc.errors import DimensionMismatchError, DomainError, NoSolutionError

if TYPE_CHECKING:
    from nfp_assoc.scenario import Scenario

logger = structlog.get_logger(__name__)

ArrayLike = Union[float, np.ndarray]

# Bisection stops well inside the 0.01 dB forward-check tolerance.
INVERSION_XTOL_M = 1e-6
INVERSION_MAX_RANGE_M = 1e7


@dataclass(frozen=True)
class EnvironmentParams:
    """Channel constants. Defaults describe a dense urban environment."""

    alpha: float = 9.61
    beta: float = 0.16
    eta_los: float = 1.0          # dB
    eta_nlos: float = 20.0        # dB
    carrier_freq: float = 2e9     # Hz
    pl_exponent: float = 2.0      # free space
    tx_power: float = 5.0         # W
    noise_floor: float = 1e-13    # W (-100 dBm)
    light_speed: float = field(default=constants.c, init=False)

    def __post_init__(self):
        values = {
            "alpha": self.alpha, "beta": self.beta, "eta_los": self.eta_los,
            "eta_nlos": self.eta_nlos, "carrier_freq": self.carrier_freq,
            "pl_exponent": self.pl_exponent, "tx_power": self.tx_power,
            "noise_floor": self.noise_floor,
        }
        for name, value in values.items():
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
        if self.alpha <= 0 or self.beta <= 0:
            raise DomainError(f"alpha and beta must be > 0, got {self.alpha}, {self.beta}")
        if not self.eta_nlos >= self.eta_los >= 0:
            raise DomainError(
                f"need eta_nlos >= eta_los >= 0, got eta_los={self.eta_los}, eta_nlos={self.eta_nlos}"
            )
        if self.carrier_freq <= 0 or self.tx_power <= 0 or self.noise_floor <= 0:
            raise DomainError("carrier_freq, tx_power and noise_floor must be > 0")
        if self.pl_exponent < 2:
            raise DomainError(f"pl_exponent must be >= 2, got {self.pl_exponent}")


@dataclass(frozen=True)
class Position3D:
    """Cartesian position in meters. SCs sit at z = 0, NFPs at z = h_D."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise DomainError(f"non-finite coordinate in {self}")
        if self.z < 0:
            raise DomainError(f"z must be >= 0, got {self.z}")

    def horizontal_distance(self, other: "Position3D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_list(self) -> list:
        return [self.x, self.y, self.z]


def db_to_linear(db: ArrayLike) -> ArrayLike:
    value = 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return value if value.ndim else float(value)


def linear_to_db(x: ArrayLike) -> ArrayLike:
    with np.errstate(divide="ignore"):
        value = 10.0 * np.log10(np.asarray(x, dtype=float))
    return value if value.ndim else float(value)


def los_probability(elevation_deg: ArrayLike, env: EnvironmentParams) -> ArrayLike:
    """
    Probability of a line-of-sight link at the given elevation angle.

    Args:
        elevation_deg: Elevation from the SC to the NFP in degrees, in (0, 90].
        env: Channel constants (alpha, beta).

    Returns:
        Probability strictly inside (0, 1); an array for array input.
    """
    theta = np.asarray(elevation_deg, dtype=float)
    if not np.all(np.isfinite(theta)) or np.any(theta <= 0.0) or np.any(theta > 90.0):
        raise DomainError(f"elevation must lie in (0, 90] degrees, got {elevation_deg}")
    p = 1.0 / (1.0 + env.alpha * np.exp(-env.beta * (theta - env.alpha)))
    return p if p.ndim else float(p)


def _path_loss_from_geometry(s: np.ndarray, h: np.ndarray, env: EnvironmentParams) -> np.ndarray:
    """Average path loss in dB for horizontal distances s and heights h (broadcast)."""
    d = np.hypot(h, s)
    if np.any(d <= 0.0):
        raise DomainError("SC and NFP are colocated (d = 0)")
    # arctan2 gives exactly 90 degrees at s = 0
    theta_deg = np.degrees(np.arctan2(h, s))
    fspl = 10.0 * env.pl_exponent * np.log10(4.0 * np.pi * env.carrier_freq * d / env.light_speed)
    p_los = los_probability(theta_deg, env)
    return fspl + p_los * env.eta_los + (1.0 - p_los) * env.eta_nlos


def path_loss_db(sc: Position3D, nfp: Position3D, env: EnvironmentParams) -> float:
    if nfp.z <= 0:
        raise DomainError(f"NFP height must be > 0, got {nfp.z}")
    if sc.z != 0:
        raise DomainError(f"SC must be on the ground (z = 0), got {sc.z}")
    s = np.asarray(sc.horizontal_distance(nfp))
    return float(_path_loss_from_geometry(s, np.asarray(nfp.z - sc.z), env))


def path_loss_at(s: float, h_d: float, env: EnvironmentParams) -> float:
    """Path loss for a horizontal distance s and NFP height h_d."""
    return float(_path_loss_from_geometry(np.asarray(float(s)), np.asarray(float(h_d)), env))


def path_loss_matrix(sc_xy: np.ndarray, nfp_xyz: np.ndarray, env: EnvironmentParams) -> np.ndarray:
    """N_SC x N_D path loss matrix in dB; sc_xy is (N_SC, 2), nfp_xyz is (N_D, 3)."""
    sc_xy = np.asarray(sc_xy, dtype=float).reshape(-1, 2)
    nfp_xyz = np.asarray(nfp_xyz, dtype=float).reshape(-1, 3)
    if np.any(nfp_xyz[:, 2] <= 0):
        raise DomainError("NFP heights must be > 0")
    s = cdist(sc_xy, nfp_xyz[:, :2]) if len(sc_xy) and len(nfp_xyz) else np.zeros((len(sc_xy), len(nfp_xyz)))
    return _path_loss_from_geometry(s, nfp_xyz[:, 2][np.newaxis, :], env)


def invert_path_loss(pl_target: float, h_d: float, env: EnvironmentParams) -> float:
    """
    Horizontal distance at which the average path loss reaches pl_target.

    Uses bracketed bisection on the monotone-increasing branch of the path
    loss in s. Raises NoSolutionError when pl_target is below the loss
    directly underneath the NFP.
    """
    if h_d <= 0:
        raise DomainError(f"NFP height must be > 0, got {h_d}")
    pl_zero = path_loss_at(0.0, h_d, env)
    if pl_target < pl_zero:
        raise NoSolutionError(
            f"path loss target {pl_target:.3f} dB is below the s = 0 loss {pl_zero:.3f} dB at h = {h_d} m"
        )
    if pl_target == pl_zero:
        return 0.0

    def excess(s: float) -> float:
        return path_loss_at(s, h_d, env) - pl_target

    hi = max(h_d, 1.0)
    while excess(hi) < 0:
        hi *= 2.0
        if hi > INVERSION_MAX_RANGE_M:
            raise NoSolutionError(f"path loss target {pl_target} dB not reached within {INVERSION_MAX_RANGE_M} m")
    return float(bisect(excess, 0.0, hi, xtol=INVERSION_XTOL_M, maxiter=200))


def coverage_radius(pl_max: float, h_d: float, env: EnvironmentParams) -> float:
    """Ground radius an NFP at height h_d can serve under a maximum path loss."""
    return invert_path_loss(pl_max, h_d, env)


def received_power_watts(pl_db: ArrayLike, env: EnvironmentParams) -> ArrayLike:
    value = env.tx_power / 10.0 ** (np.asarray(pl_db, dtype=float) / 10.0)
    return value if value.ndim else float(value)


def sinr_linear(sc_index: int, nfp_index: int, rx_power: np.ndarray, env: EnvironmentParams) -> float:
    """
    SINR of SC sc_index toward NFP nfp_index.

    Every other NFP counts as an interferer whether or not it serves anyone.
    """
    row = np.asarray(rx_power, dtype=float)[sc_index]
    others = np.arange(row.shape[0]) != nfp_index
    return float(row[nfp_index] / (row[others].sum() + env.noise_floor))


def sinr_matrix(rx_power: np.ndarray, env: EnvironmentParams) -> np.ndarray:
    """Vectorized sinr_linear over every (SC, NFP) pair."""
    rx = np.asarray(rx_power, dtype=float)
    n_d = rx.shape[1] if rx.ndim == 2 else 0
    interference = np.empty_like(rx)
    for k in range(n_d):
        others = np.arange(n_d) != k
        interference[:, k] = rx[:, others].sum(axis=1)
    return rx / (interference + env.noise_floor)


@dataclass(frozen=True, eq=False)
class LinkMetrics:
    """Dense per-pair link quantities, all N_SC x N_D."""

    rate: np.ndarray          # bit/s
    sinr: np.ndarray          # linear
    spectral_eff: np.ndarray  # bit/s/Hz
    bandwidth: np.ndarray     # Hz, +inf where spectral_eff == 0
    eligible: np.ndarray      # bool

    @property
    def n_sc(self) -> int:
        return self.rate.shape[0]

    @property
    def n_d(self) -> int:
        return self.rate.shape[1]

    @classmethod
    def from_matrices(cls, rate: np.ndarray, sinr: np.ndarray, sinr_min: float) -> "LinkMetrics":
        rate = np.array(rate, dtype=float, ndmin=2)
        sinr = np.array(sinr, dtype=float, ndmin=2)
        if rate.shape != sinr.shape:
            raise DimensionMismatchError(f"rate {rate.shape} and sinr {sinr.shape} differ")
        spectral_eff = np.log2(1.0 + sinr)
        with np.errstate(divide="ignore", invalid="ignore"):
            bandwidth = np.where(spectral_eff > 0, rate / np.where(spectral_eff > 0, spectral_eff, 1.0), np.inf)
        eligible = (sinr >= sinr_min) & np.isfinite(bandwidth)
        for arr in (rate, sinr, spectral_eff, bandwidth, eligible):
            arr.setflags(write=False)
        return cls(rate=rate, sinr=sinr, spectral_eff=spectral_eff, bandwidth=bandwidth, eligible=eligible)

    def check_consistency(self, rtol: float = 1e-9) -> None:
        """Raise DomainError if b * eta != r or eta != log2(1 + SINR)."""
        if np.any(self.rate < 0) or np.any(self.sinr < 0) or np.any(~np.isfinite(self.sinr)):
            raise DomainError("link metrics contain negative or non-finite entries")
        if not np.allclose(self.spectral_eff, np.log2(1.0 + self.sinr), rtol=1e-12, atol=0.0):
            raise DomainError("spectral efficiency differs from log2(1 + SINR)")
        pos = self.spectral_eff > 0
        if not np.allclose((self.bandwidth * self.spectral_eff)[pos], self.rate[pos], rtol=rtol, atol=0.0):
            raise DomainError("bandwidth * spectral efficiency differs from rate")


def compute_link_metrics(scenario: "Scenario", env: EnvironmentParams, sinr_min: float) -> LinkMetrics:
    """
    Evaluate every SC/NFP pair of a scenario.

    Each SC asks every NFP for the same rate r_i; eligibility is SINR >= sinr_min
    (inclusive).
    """
    sc_xy = np.array([[p.x, p.y] for p in scenario.sc_positions], dtype=float).reshape(-1, 2)
    nfp_xyz = np.array([p.as_list() for p in scenario.nfp_positions], dtype=float).reshape(-1, 3)
    rates = np.asarray(scenario.sc_rates, dtype=float)

    pl = path_loss_matrix(sc_xy, nfp_xyz, env)
    rx = received_power_watts(pl, env)
    sinr = sinr_matrix(rx, env)
    rate = np.repeat(rates[:, np.newaxis], nfp_xyz.shape[0], axis=1)
    metrics = LinkMetrics.from_matrices(rate, sinr, sinr_min)
    logger.debug("link_metrics_computed", n_sc=metrics.n_sc, n_d=metrics.n_d,
                 eligible_pairs=int(metrics.eligible.sum()))
    return metrics


def positions_from_lists(points: Sequence[Sequence[float]]) -> list:
    return [Position3D(*map(float, p)) for p in points]
