"""
Channel model tests.

 Group 1 - LoS probability
 Group 2 - Path loss and its inversion
 Group 3 - Received power and SINR
 Group 4 - Link metrics
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from nfp_assoc.channel import (
    EnvironmentParams,
    LinkMetrics,
    Position3D,
    compute_link_metrics,
    coverage_radius,
    db_to_linear,
    invert_path_loss,
    linear_to_db,
    los_probability,
    path_loss_at,
    path_loss_db,
    path_loss_matrix,
    received_power_watts,
    sinr_linear,
    sinr_matrix,
)
from nfp_assoc.errors import DimensionMismatchError, DomainError, NoSolutionError
from nfp_assoc.scenario import Scenario


# Group 1

def test_los_probability_at_alpha(env):
    assert los_probability(9.61, env) == pytest.approx(1 / 10.61, rel=1e-9)


@pytest.mark.parametrize("theta, expected", [(90.0, 0.99997), (45.0, 0.9677)])
def test_los_probability_reference_values(env, theta, expected):
    assert los_probability(theta, env) == pytest.approx(expected, abs=5e-5)


def test_los_probability_strictly_increasing(env):
    theta = np.linspace(0.5, 90.0, 500)
    p = los_probability(theta, env)
    assert np.all(np.diff(p) > 0)
    assert np.all((p > 0) & (p < 1))


@pytest.mark.parametrize("theta", [0.0, -1.0, 90.5, float("nan")])
def test_los_probability_rejects_out_of_domain(env, theta):
    with pytest.raises(DomainError):
        los_probability(theta, env)


# Group 2

def test_path_loss_directly_below(env):
    pl = path_loss_db(Position3D(0, 0, 0), Position3D(0, 0, 300), env)
    assert pl == pytest.approx(89.01, abs=0.01)


def test_path_loss_without_excess_is_free_space():
    env = EnvironmentParams(eta_los=0.0, eta_nlos=0.0)
    sc, nfp = Position3D(400, 0, 0), Position3D(0, 0, 300)
    fspl = 20 * np.log10(4 * np.pi * env.carrier_freq * 500.0 / env.light_speed)
    assert path_loss_db(sc, nfp, env) == pytest.approx(fspl, rel=1e-12)


def test_path_loss_increases_with_distance(env):
    s = np.linspace(0.0, 5000.0, 1001)
    pl = np.array([path_loss_at(v, 300.0, env) for v in s])
    assert np.all(np.diff(pl) > 0)
    assert path_loss_at(1000, 300, env) > path_loss_at(100, 300, env)


def test_path_loss_rejects_bad_geometry(env):
    with pytest.raises(DomainError):
        path_loss_db(Position3D(0, 0, 0), Position3D(0, 0, 0), env)
    with pytest.raises(DomainError):
        path_loss_db(Position3D(0, 0, 5), Position3D(0, 0, 300), env)


def test_path_loss_matrix_matches_pairwise(env):
    scs = [Position3D(0, 0), Position3D(1200, 300), Position3D(3000, 2500)]
    nfps = [Position3D(500, 500, 300), Position3D(2500, 2500, 300)]
    matrix = path_loss_matrix([[p.x, p.y] for p in scs], [p.as_list() for p in nfps], env)
    for i, sc in enumerate(scs):
        for j, nfp in enumerate(nfps):
            assert matrix[i, j] == pytest.approx(path_loss_db(sc, nfp, env), rel=1e-12)


def test_invert_path_loss_hits_target(env):
    s = invert_path_loss(115.0, 300.0, env)
    assert abs(path_loss_at(s, 300.0, env) - 115.0) < 0.01
    assert coverage_radius(115.0, 300.0, env) == s


def test_invert_path_loss_boundary_is_zero(env):
    assert invert_path_loss(path_loss_at(0.0, 300.0, env), 300.0, env) == 0.0


def test_invert_path_loss_below_floor(env):
    with pytest.raises(NoSolutionError):
        invert_path_loss(50.0, 300.0, env)


@pytest.mark.parametrize("s0", [1.0, 37.5, 500.0, 1055.0, 2500.0, 5000.0])
def test_invert_path_loss_round_trip(env, s0):
    pl = path_loss_at(s0, 300.0, env)
    assert invert_path_loss(pl, 300.0, env) == pytest.approx(s0, abs=0.5)


def test_channel_shape_over_sampled_configurations(rng):
    """LoS rises with elevation, path loss rises with s and inverts back, on random environments."""
    theta = np.linspace(0.5, 90.0, 60)
    s_grid = np.linspace(1.0, 5000.0, 50)
    for _ in range(1000):
        env = EnvironmentParams(
            alpha=float(rng.uniform(1.0, 20.0)),
            beta=float(rng.uniform(0.05, 0.6)),
            eta_los=float(rng.uniform(0, 3)),
            eta_nlos=float(rng.uniform(3, 30)),
            carrier_freq=float(rng.uniform(1e9, 6e9)),
        )
        h_d = float(rng.uniform(50.0, 1000.0))

        p = los_probability(theta, env)
        assert np.all(np.diff(p) >= 0) and p[-1] > p[0]

        pl = path_loss_matrix(np.column_stack([s_grid, np.zeros_like(s_grid)]), [[0.0, 0.0, h_d]], env)[:, 0]
        assert np.all(np.diff(pl) > 0)

        for s0 in rng.uniform(1.0, 5000.0, 3):
            assert abs(invert_path_loss(path_loss_at(s0, h_d, env), h_d, env) - s0) <= 0.5


# Group 3

@pytest.mark.parametrize("pl, watts", [(0.0, 5.0), (10.0, 0.5), (89.01, 6.28e-9)])
def test_received_power(env, pl, watts):
    assert received_power_watts(pl, env) == pytest.approx(watts, rel=2e-3)


def test_sinr_single_nfp_has_no_interference():
    env = EnvironmentParams(noise_floor=1e-10)
    assert sinr_linear(0, 0, np.array([[1e-9]]), env) == pytest.approx(10.0)


def test_sinr_symmetric_pair_tends_to_one():
    env = EnvironmentParams(noise_floor=1e-30)
    assert sinr_linear(0, 0, np.array([[1e-9, 1e-9]]), env) == pytest.approx(1.0, rel=1e-12)


def test_sinr_three_nfps_hand_value():
    env = EnvironmentParams(noise_floor=1e-9)
    assert sinr_linear(0, 0, np.array([[4e-9, 1e-9, 1e-9]]), env) == pytest.approx(4 / 3)


def test_sinr_drops_when_interference_grows(env, rng):
    rx = rng.uniform(1e-12, 1e-9, size=(5, 3))
    louder = rx.copy()
    louder[:, 2] *= 3.0
    before, after = sinr_matrix(rx, env), sinr_matrix(louder, env)
    assert np.all(after[:, :2] < before[:, :2])


def test_sinr_matrix_matches_scalar(env, rng):
    rx = rng.uniform(1e-12, 1e-9, size=(4, 3))
    matrix = sinr_matrix(rx, env)
    for i in range(4):
        for j in range(3):
            assert matrix[i, j] == pytest.approx(sinr_linear(i, j, rx, env), rel=1e-12)


def test_db_round_trip():
    assert db_to_linear(-5.0) == pytest.approx(0.316227766)
    assert linear_to_db(db_to_linear(-3.0)) == pytest.approx(-3.0)
    np.testing.assert_allclose(linear_to_db(np.array([1.0, 10.0, 100.0])), [0.0, 10.0, 20.0])


# Group 4

def test_link_metrics_reference_bandwidth():
    metrics = LinkMetrics.from_matrices([[30e6]], [[db_to_linear(-5.0)]], db_to_linear(-5.0))
    eta = np.log2(1.0 + 10.0 ** -0.5)  # about 0.3964 bit/s/Hz
    assert metrics.spectral_eff[0, 0] == pytest.approx(eta, rel=1e-12)
    assert metrics.bandwidth[0, 0] == pytest.approx(30e6 / eta, rel=1e-12)
    assert metrics.bandwidth[0, 0] == pytest.approx(75.68e6, rel=1e-4)
    assert metrics.eligible[0, 0]


def test_link_metrics_below_threshold_not_eligible():
    metrics = LinkMetrics.from_matrices([[30e6]], [[db_to_linear(-5.1)]], db_to_linear(-5.0))
    assert not metrics.eligible[0, 0]


def test_link_metrics_zero_sinr_is_infinite_bandwidth():
    metrics = LinkMetrics.from_matrices([[30e6, 30e6]], [[0.0, 1.0]], 1e-6)
    assert np.isinf(metrics.bandwidth[0, 0])
    assert not metrics.eligible[0, 0]
    assert metrics.eligible[0, 1]


def test_link_metrics_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        LinkMetrics.from_matrices(np.ones((2, 3)), np.ones((3, 2)), 1.0)


def test_link_metrics_are_read_only():
    metrics = LinkMetrics.from_matrices([[30e6]], [[1.0]], 0.5)
    with pytest.raises(ValueError):
        metrics.rate[0, 0] = 1.0


def test_compute_link_metrics_on_scenario(env):
    scenario = Scenario(
        sc_positions=[Position3D(100, 100), Position3D(900, 50), Position3D(2000, 2000)],
        nfp_positions=[Position3D(0, 0, 300), Position3D(2100, 2100, 300)],
        sc_rates=[30e6, 90e6, 150e6],
        seed_used=0,
    )
    metrics = compute_link_metrics(scenario, env, db_to_linear(-5.0))
    assert (metrics.n_sc, metrics.n_d) == (3, 2)
    np.testing.assert_array_equal(metrics.rate[:, 1], [30e6, 90e6, 150e6])
    assert metrics.sinr[0, 0] > metrics.sinr[0, 1]
    assert metrics.sinr[2, 1] > metrics.sinr[2, 0]
    metrics.check_consistency()


def test_consistency_over_sampled_configurations(rng):
    """b * eta = r and eta = log2(1 + SINR) on many random environments."""
    for _ in range(1000):
        env = EnvironmentParams(
            eta_los=float(rng.uniform(0, 3)),
            eta_nlos=float(rng.uniform(3, 30)),
            carrier_freq=float(rng.uniform(1e9, 6e9)),
            noise_floor=float(10 ** rng.uniform(-15, -10)),
        )
        n_sc, n_d = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        scenario = Scenario(
            sc_positions=[Position3D(*rng.uniform(0, 4000, 2)) for _ in range(n_sc)],
            nfp_positions=[Position3D(*rng.uniform(0, 4000, 2), 300.0) for _ in range(n_d)],
            sc_rates=list(rng.choice([30e6, 60e6, 90e6, 120e6, 150e6], size=n_sc)),
            seed_used=0,
        )
        compute_link_metrics(scenario, env, db_to_linear(-5.0)).check_consistency()


def test_environment_validation():
    with pytest.raises(DomainError):
        EnvironmentParams(eta_los=5.0, eta_nlos=1.0)
    with pytest.raises(DomainError):
        EnvironmentParams(pl_exponent=1.5)
    with pytest.raises(DomainError):
        replace(EnvironmentParams(), noise_floor=0.0)
