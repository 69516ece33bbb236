"""
Shared fixtures.

Instances here are built straight from rate and SINR matrices so solver tests
do not depend on scenario geometry. The exhaustive oracle enumerates every
(N_D + 1)^N_SC assignment vector with numpy and is independent of the solvers.
"""

from __future__ import annotations

from itertools import product

import numpy as np
import pytest

from nfp_assoc.channel import EnvironmentParams, LinkMetrics, db_to_linear
from nfp_assoc.instance import AssociationInstance, NetworkLimits

MBPS = 1e6
GBPS = 1e9
GHZ = 1e9
SINR_MIN_DB = -5.0
RATE_CHOICES = np.array([30, 60, 90, 120, 150]) * MBPS


def build_instance(rates, sinr_db, backhaul, bandwidth, links, sinr_min_db=SINR_MIN_DB):
    """
    Instance from per-SC rates and an N_SC x N_D matrix of SINR values in dB.

    bandwidth and links may be scalars (same for every NFP) or per-NFP lists.
    """
    sinr_db = np.array(sinr_db, dtype=float, ndmin=2)
    n_d = sinr_db.shape[1]
    rate = np.repeat(np.asarray(rates, dtype=float).reshape(-1, 1), n_d, axis=1)
    sinr_min = db_to_linear(sinr_min_db)
    metrics = LinkMetrics.from_matrices(rate, db_to_linear(sinr_db), sinr_min)
    bw = tuple(bandwidth) if np.ndim(bandwidth) else (bandwidth,) * n_d
    nl = tuple(links) if np.ndim(links) else (links,) * n_d
    return AssociationInstance(metrics, NetworkLimits(backhaul, bw, nl, sinr_min))


def random_instance(rng: np.random.Generator, max_sc: int = 8, max_d: int = 3):
    """Small random instance with every constraint able to bind."""
    n_sc = int(rng.integers(1, max_sc + 1))
    n_d = int(rng.integers(1, max_d + 1))
    rates = rng.choice(RATE_CHOICES, size=n_sc)
    sinr_db = rng.uniform(-10.0, 20.0, size=(n_sc, n_d))
    backhaul = float(rng.uniform(0.2, 1.2) * rates.sum())
    bandwidth = list(rng.uniform(50e6, 600e6, size=n_d))
    links = list(rng.integers(1, n_sc + 1, size=n_d))
    return build_instance(rates, sinr_db, backhaul, bandwidth, links)


def exhaustive_optimum(inst: AssociationInstance) -> int:
    """Largest feasible association count over all assignment vectors."""
    n_sc, n_d = inst.n_sc, inst.n_d
    codes = np.array(list(product(range(n_d + 1), repeat=n_sc)), dtype=int).reshape(-1, n_sc)
    onehot = codes[:, :, None] == np.arange(n_d)[None, None, :]  # code n_d = unassigned

    eligible_ok = ~(onehot & ~inst.eligible[None, :, :]).any(axis=(1, 2))
    rate_ok = np.where(onehot, inst.metrics.rate[None], 0.0).sum(axis=(1, 2)) <= inst.limits.backhaul_rate
    bw_ok = (np.where(onehot, inst.metrics.bandwidth[None], 0.0).sum(axis=1)
             <= inst.bandwidth_limits[None, :]).all(axis=1)
    links_ok = (onehot.sum(axis=1) <= inst.link_limits[None, :]).all(axis=1)

    feasible = eligible_ok & rate_ok & bw_ok & links_ok
    return int(onehot.sum(axis=(1, 2))[feasible].max())


def thirty_sc_rate_instance(backhaul=2.9 * GBPS, bandwidth=1000 * GHZ, links=30):
    """
    30 SCs on 3 NFPs whose rates sum to 3.18 Gbps.

    SC i is strong (20 dB) toward NFP i % 3 except three weak SCs: SC 0
    (150 Mbps, -5 dB) and SCs 1, 2 (120 Mbps, -3 dB). Off-home links sit
    exactly at the SINR threshold, so every link is eligible.
    """
    strong = [150] * 7 + [120] * 6 + [90] * 7 + [60] * 6 + [30]
    rates = (np.array([150, 120, 120] + strong) * MBPS).tolist()
    home_db = [-5.0, -3.0, -3.0] + [20.0] * len(strong)
    sinr_db = np.full((30, 3), SINR_MIN_DB)
    for i, value in enumerate(home_db):
        sinr_db[i, i % 3] = value
    return build_instance(rates, sinr_db, backhaul, bandwidth, links)


@pytest.fixture
def env():
    return EnvironmentParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def thirty_sc_instance():
    return thirty_sc_rate_instance()


@pytest.fixture
def thirty_sc_tight_instance():
    """Same rates with N_l = 16 and B = 1 GHz per NFP."""
    return thirty_sc_rate_instance(bandwidth=1 * GHZ, links=16)


@pytest.fixture
def make_instance():
    return build_instance


@pytest.fixture
def make_random_instance():
    return random_instance


@pytest.fixture
def oracle():
    return exhaustive_optimum
