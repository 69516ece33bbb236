"""
Random SC/NFP topologies.

Both layers are drawn from a Matern type-I hard-core process over a square
region: a homogeneous Poisson parent realization is thinned by deleting
every point that has a neighbour closer than the hard-core distance. The
layer sizes (N_SC, N_D) are fixed, so whole realizations are resampled
until one has enough survivors, and a uniform random subset of the exact
size is kept.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.spatial import cKDTree

from nfp_assoc.channel import EnvironmentParams, Position3D, invert_path_loss, positions_from_lists
from nfp_assoc.errors import ConfigError, GenerationError, SweepIOError

logger = structlog.get_logger(__name__)

MBPS = 1e6
DEFAULT_RATE_CHOICES = (30 * MBPS, 60 * MBPS, 90 * MBPS, 120 * MBPS, 150 * MBPS)
DEFAULT_MAX_ATTEMPTS = 10_000

# Substream order of the master seed; never reorder, saved scenarios depend on it.
SUBSTREAMS = ("sc_placement", "nfp_placement", "rates")


@dataclass(frozen=True)
class ScenarioConfig:
    """Topology parameters. Defaults describe a 4 km x 4 km urban area."""

    area_side: float = 4000.0
    n_sc: int = 30
    n_d: int = 3
    density: float = 5e-6
    sc_min_sep: float = 300.0
    nfp_min_sep: Optional[float] = None   # None: derived from pl_max
    nfp_height: float = 300.0
    rate_choices: Tuple[float, ...] = DEFAULT_RATE_CHOICES
    pl_max: float = 115.0
    seed: int = 0
    nfp_density: Optional[float] = None   # None: retention-maximising intensity
    max_attempts: int = DEFAULT_MAX_ATTEMPTS

    def __post_init__(self):
        object.__setattr__(self, "rate_choices", tuple(float(r) for r in self.rate_choices))
        if not self.area_side > 0:
            raise ConfigError(f"area_side must be > 0, got {self.area_side}")
        if self.n_sc < 0 or self.n_d < 0:
            raise ConfigError(f"n_sc and n_d must be >= 0, got {self.n_sc}, {self.n_d}")
        if self.sc_min_sep < 0 or (self.nfp_min_sep is not None and self.nfp_min_sep < 0):
            raise ConfigError("minimum separations must be >= 0")
        if not self.density > 0 or (self.nfp_density is not None and not self.nfp_density > 0):
            raise ConfigError("densities must be > 0")
        if not self.nfp_height > 0:
            raise ConfigError(f"nfp_height must be > 0, got {self.nfp_height}")
        if not self.rate_choices or any(not r > 0 for r in self.rate_choices):
            raise ConfigError("rate_choices must be non-empty and all > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")

    @property
    def area(self) -> float:
        return self.area_side ** 2


@dataclass(frozen=True)
class Scenario:
    """One static snapshot of SC and NFP positions plus requested SC rates."""

    sc_positions: List[Position3D]
    nfp_positions: List[Position3D]
    sc_rates: List[float]
    seed_used: int
    area_side: float = 0.0
    sc_min_sep: float = 0.0
    nfp_min_sep: float = 0.0

    def __post_init__(self):
        if len(self.sc_rates) != len(self.sc_positions):
            raise ConfigError(
                f"{len(self.sc_rates)} rates for {len(self.sc_positions)} small cells"
            )

    @property
    def n_sc(self) -> int:
        return len(self.sc_positions)

    @property
    def n_d(self) -> int:
        return len(self.nfp_positions)

    def total_rate(self) -> float:
        return float(sum(self.sc_rates))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed_used,
            "area_side": self.area_side,
            "sc_min_sep": self.sc_min_sep,
            "nfp_min_sep": self.nfp_min_sep,
            "sc_positions": [p.as_list() for p in self.sc_positions],
            "nfp_positions": [p.as_list() for p in self.nfp_positions],
            "sc_rates": list(self.sc_rates),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            return cls(
                sc_positions=positions_from_lists(data["sc_positions"]),
                nfp_positions=positions_from_lists(data["nfp_positions"]),
                sc_rates=[float(r) for r in data["sc_rates"]],
                seed_used=int(data["seed"]),
                area_side=float(data.get("area_side", 0.0)),
                sc_min_sep=float(data.get("sc_min_sep", 0.0)),
                nfp_min_sep=float(data.get("nfp_min_sep", 0.0)),
            )
        except KeyError as e:
            raise ConfigError(f"scenario document is missing field {e}") from e

    def save(self, path) -> Path:
        path = Path(path)
        try:
            os.makedirs(path.parent, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                json.dump(self.to_dict(), f, indent=4)
        except OSError as e:
            raise SweepIOError(f"could not write scenario to {path}: {e}") from e
        return path

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"scenario {path} is not valid JSON: {e}") from e
        except OSError as e:
            raise SweepIOError(f"could not read scenario {path}: {e}") from e
        return cls.from_dict(data)


def matern_type1_survivors(points: np.ndarray, min_sep: float) -> np.ndarray:
    """
    Boolean mask of the points that survive type-I thinning.

    A point is deleted when any other point lies closer than min_sep; both
    members of a close pair go.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    keep = np.ones(len(points), dtype=bool)
    if len(points) < 2 or min_sep <= 0:
        return keep
    pairs = cKDTree(points).query_pairs(r=min_sep, output_type="ndarray")
    if len(pairs):
        d = np.hypot(*(points[pairs[:, 0]] - points[pairs[:, 1]]).T)
        close = pairs[d < min_sep]
        keep[close.ravel()] = False
    return keep


def sample_hardcore(n_target: int, area_side: float, min_sep: float, density: float,
                    rng: np.random.Generator, max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> List[Position3D]:
    """
    Exactly n_target ground points from a Matern type-I hard-core process.

    Whole parent realizations are redrawn until one yields at least n_target
    survivors; survivors from different realizations are never pooled.
    """
    if n_target == 0:
        return []
    area = area_side ** 2
    if n_target * math.pi * (min_sep / 2.0) ** 2 >= 0.5 * area:
        raise GenerationError(
            f"cannot pack {n_target} points with separation {min_sep} m into {area_side} m square"
        )
    for attempt in range(1, max_attempts + 1):
        n_parent = rng.poisson(density * area)
        parents = rng.uniform(0.0, area_side, size=(n_parent, 2))
        if n_parent < n_target:
            continue
        survivors = parents[matern_type1_survivors(parents, min_sep)]
        if len(survivors) >= n_target:
            chosen = np.sort(rng.choice(len(survivors), size=n_target, replace=False))
            logger.debug("hardcore_sampled", n_target=n_target, attempts=attempt,
                         survivors=len(survivors))
            return [Position3D(float(x), float(y), 0.0) for x, y in survivors[chosen]]
    raise GenerationError(
        f"no realization with {n_target} survivors (min_sep={min_sep:.1f} m, "
        f"density={density:.3g}/m^2) after {max_attempts} attempts"
    )


def retention_optimal_density(min_sep: float) -> float:
    """Parent intensity maximising the mean type-I survivor count, 1 / (pi r^2)."""
    return 1.0 / (math.pi * min_sep ** 2) if min_sep > 0 else math.inf


def resolve_nfp_min_sep(config: ScenarioConfig, env: EnvironmentParams) -> float:
    if config.nfp_min_sep is not None:
        return float(config.nfp_min_sep)
    return invert_path_loss(config.pl_max, config.nfp_height, env)


def resolve_nfp_density(config: ScenarioConfig, nfp_min_sep: float) -> float:
    if config.nfp_density is not None:
        return config.nfp_density
    return min(config.density, retention_optimal_density(nfp_min_sep))


def substream_generators(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(SUBSTREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(SUBSTREAMS, children)}


def build_scenario(config: ScenarioConfig, env: EnvironmentParams) -> Scenario:
    """
    Place SCs and NFPs and assign requested rates; deterministic in config.seed.

    The NFP separation defaults to the ground distance at which the path loss
    reaches pl_max.
    """
    nfp_min_sep = resolve_nfp_min_sep(config, env)
    streams = substream_generators(config.seed)

    sc_points = sample_hardcore(config.n_sc, config.area_side, config.sc_min_sep, config.density,
                                streams["sc_placement"], config.max_attempts)
    nfp_points = sample_hardcore(config.n_d, config.area_side, nfp_min_sep,
                                 resolve_nfp_density(config, nfp_min_sep),
                                 streams["nfp_placement"], config.max_attempts)
    nfp_positions = [Position3D(p.x, p.y, config.nfp_height) for p in nfp_points]
    rates = streams["rates"].choice(np.asarray(config.rate_choices), size=config.n_sc)

    scenario = Scenario(
        sc_positions=sc_points,
        nfp_positions=nfp_positions,
        sc_rates=[float(r) for r in rates],
        seed_used=config.seed,
        area_side=config.area_side,
        sc_min_sep=config.sc_min_sep,
        nfp_min_sep=nfp_min_sep,
    )
    logger.debug("scenario_built", seed=config.seed, n_sc=scenario.n_sc, n_d=scenario.n_d,
                 total_rate=scenario.total_rate(), nfp_min_sep=round(nfp_min_sep, 2))
    return scenario


def min_pairwise_distance(points: Sequence[Position3D]) -> float:
    """Smallest horizontal distance between any two points (inf for < 2 points)."""
    if len(points) < 2:
        return math.inf
    xy = np.array([[p.x, p.y] for p in points])
    d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    np.fill_diagonal(d, np.inf)
    return float(d.min())
