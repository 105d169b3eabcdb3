import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fimmimo.channel import (
    EnvironmentConfig,
    PathAngles,
    ScatteringEnvironment,
    assemble_channel,
    assemble_channel_sum,
    link_model,
    morphing_response,
    pathloss,
    perturb_csi,
    propagation_direction,
    sample_environment,
    steering_vector,
)
from fimmimo.errors import ConfigurationError, DimensionError
from fimmimo.geometry import ArrayGeometry, OrientationAngles, OrientationFrame, SurfaceShape, element_positions, frame_from_angles

from conftest import LAMBDA, default_geoms

R2 = math.sqrt(2) / 2


def random_geom(rng, size_x, size_y, ref):
    frame = frame_from_angles(OrientationAngles(rng.uniform(0, math.pi), rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)))
    d = rng.uniform(0.2, 0.8)
    return ArrayGeometry(size_x, size_y, d, d, frame, ref)


def channel_from_positions(env, tx, rx, zeta, xi):
    """Path-by-path sum using absolute element positions instead of separate steering factors."""
    kappa = env.wavenumber
    pt = element_positions(tx, SurfaceShape(zeta, np.max(np.abs(zeta), initial=0)))
    pr = element_positions(rx, SurfaceShape(xi, np.max(np.abs(xi), initial=0)))
    ot = env.departure.directions()
    orr = env.arrival.directions()
    g = env.gains.ravel()
    H = np.zeros((rx.size, tx.size), complex)
    for p in range(g.size):
        at = np.exp(1j * kappa * (pt - tx.reference_position) @ ot[p])
        ar = np.exp(1j * kappa * (pr - rx.reference_position) @ orr[p])
        H += g[p] * np.outer(ar, at.conj())
    return H


@pytest.mark.parametrize(
    "az,el,expected",
    [(0, 0, [0, 0, 1]), (math.pi / 2, math.pi / 2, [0, 1, 0]), (math.pi / 4, math.pi / 2, [R2, R2, 0])],
)
def test_propagation_direction(az, el, expected):
    np.testing.assert_allclose(propagation_direction(az, el), expected, atol=1e-15)


def test_pathloss_default_and_monotone():
    assert pathloss(1.0) == pytest.approx(1e-6)
    d = np.linspace(1, 500, 50)
    assert np.all(np.diff(pathloss(d)) < 0)


def test_zero_spread_path_sits_at_mean():
    env = sample_environment(EnvironmentConfig(1, 1, 0.0, 0.0, 1.0, LAMBDA), 3)
    assert env.departure.azimuth[0, 0] == env.departure.mean_azimuth[0]
    assert env.arrival.elevation[0, 0] == env.arrival.mean_elevation[0]


def test_cluster_power_split():
    env = sample_environment(EnvironmentConfig(4, 2, 0.01, 0.01, 4 * 2.5, LAMBDA), 0)
    np.testing.assert_allclose(env.cluster_powers, 2.5)


def test_gain_variance_moment():
    beta2 = 3.0
    L, G = 2, 100
    env = sample_environment(EnvironmentConfig(L, G, 0.01, 0.01, beta2, LAMBDA), 11)
    target = beta2 / L / G
    emp = np.mean(np.abs(env.gains) ** 2, axis=1)
    assert np.all(np.abs(emp / target - 1) < 0.2)


def test_path_angle_spread_moment():
    sigma = 0.05
    env = sample_environment(EnvironmentConfig(8, 500, sigma, sigma, 1.0, LAMBDA), 5)
    dev = env.departure.azimuth - env.departure.mean_azimuth[:, None]
    assert np.max(np.abs(dev)) <= math.sqrt(3) * sigma
    assert np.std(dev) == pytest.approx(sigma, rel=0.05)


def test_means_are_in_half_turn():
    env = sample_environment(EnvironmentConfig(64, 1, 0.0, 0.0, 1.0, LAMBDA), 2)
    for m in (env.departure.mean_azimuth, env.departure.mean_elevation, env.arrival.mean_azimuth, env.arrival.mean_elevation):
        assert np.all((m >= 0) & (m < math.pi))


def test_sampling_is_seeded():
    cfg = EnvironmentConfig(3, 2, 0.1, 0.1, 1.0, LAMBDA)
    a, b = sample_environment(cfg, 9), sample_environment(cfg, 9)
    np.testing.assert_array_equal(a.gains, b.gains)
    np.testing.assert_array_equal(a.arrival.azimuth, b.arrival.azimuth)


@pytest.mark.parametrize("field,value", [("num_clusters", 0), ("paths_per_cluster", 0), ("azimuth_spread", -1.0), ("wavelength", 0.0)])
def test_invalid_environment_config(field, value):
    cfg = EnvironmentConfig(**{field: value})
    with pytest.raises(ConfigurationError):
        sample_environment(cfg, 0)


def test_steering_reference_entry_is_one():
    rng = np.random.default_rng(0)
    geom = random_geom(rng, 3, 2, [0, 0, 0])
    a = steering_vector(geom, propagation_direction(0.3, 1.1), LAMBDA)
    assert a[0] == 1 + 0j


def test_steering_broadside_all_ones():
    a = steering_vector(ArrayGeometry(3, 3, 0.5, 0.5), [0, 0, 1], 1.0)
    np.testing.assert_array_equal(a, np.ones(9))


def test_steering_half_wavelength_endfire():
    a = steering_vector(ArrayGeometry(2, 1, 0.5, 0.5), [1, 0, 0], 1.0)
    np.testing.assert_allclose(a, [1, -1], atol=1e-15)


def test_steering_matches_simplified_identity_form():
    # identity orientation: phase reduces to x sin(el)cos(az) + y sin(el)sin(az)
    geom = ArrayGeometry(3, 2, 0.4, 0.6)
    az, el = 0.7, 1.2
    x, y = geom.grid_offsets()
    want = np.exp(1j * 2 * math.pi * (x * math.sin(el) * math.cos(az) + y * math.sin(el) * math.sin(az)))
    np.testing.assert_allclose(steering_vector(geom, propagation_direction(az, el), 1.0), want, atol=1e-14)
    want_f = np.exp(1j * 2 * math.pi * 0.1 * math.cos(el))
    got_f = morphing_response(SurfaceShape(np.full(6, 0.1), 0.1), OrientationFrame.identity(), propagation_direction(az, el), 1.0)
    np.testing.assert_allclose(got_f, want_f, atol=1e-14)


def test_morphing_examples():
    frame = OrientationFrame.identity()
    np.testing.assert_array_equal(morphing_response(SurfaceShape.flat(4), frame, [0.3, 0.4, np.sqrt(0.75)], 1.0), np.ones(4))
    np.testing.assert_allclose(morphing_response(SurfaceShape([0.5], 0.5), frame, [0, 0, 1], 1.0), [-1], atol=1e-15)
    np.testing.assert_allclose(morphing_response(SurfaceShape([0.3, -0.2], 0.5), frame, [1, 0, 0], 1.0), [1, 1])


def test_zero_gains_give_zero_channel():
    tx, rx = default_geoms()
    env = sample_environment(EnvironmentConfig(2, 2, 0.01, 0.01, 1.0, LAMBDA), 0)
    env = ScatteringEnvironment(env.departure, env.arrival, np.zeros((2, 2), complex), env.cluster_powers, 1.0, LAMBDA)
    assert np.all(assemble_channel(env, tx, rx, np.zeros(4), np.zeros(4)).H == 0)


def test_single_path_single_antenna():
    tx = ArrayGeometry(1, 1, 0.5, 0.5)
    rx = ArrayGeometry(1, 1, 0.5, 0.5)
    env = sample_environment(EnvironmentConfig(1, 1, 0.0, 0.0, 1.0, 1.0), 4)
    H = assemble_channel(env, tx, rx, [0.0], [0.0]).H
    assert H.shape == (1, 1)
    assert H[0, 0] == env.gains[0, 0]


def test_two_path_hand_sum():
    tx, rx = default_geoms()
    env = sample_environment(EnvironmentConfig(2, 1, 0.0, 0.0, 1.0, LAMBDA), 8)
    z = np.zeros(4)
    want = sum(
        env.gains[l, 0]
        * np.outer(steering_vector(rx, env.arrival.directions()[l], LAMBDA), steering_vector(tx, env.departure.directions()[l], LAMBDA).conj())
        for l in range(2)
    )
    np.testing.assert_allclose(assemble_channel(env, tx, rx, z, z).H, want, rtol=1e-13, atol=1e-15)


def test_matrix_and_sum_forms_agree_with_position_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        M = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        N = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        tx = random_geom(rng, *M, [0, 0, 1.0])
        rx = random_geom(rng, *N, [0, 5.0, 0])
        env = sample_environment(EnvironmentConfig(int(rng.integers(1, 5)), int(rng.integers(1, 5)), 0.05, 0.05, 1.0, 1.0), rng)
        zeta = rng.uniform(-0.5, 0.5, tx.size)
        xi = rng.uniform(-0.5, 0.5, rx.size)
        ref = channel_from_positions(env, tx, rx, zeta, xi)
        H = assemble_channel(env, tx, rx, zeta, xi).H
        assert np.linalg.norm(H - ref) <= 1e-10 * np.linalg.norm(ref)
        assert np.linalg.norm(assemble_channel_sum(env, tx, rx, zeta, xi) - ref) <= 1e-10 * np.linalg.norm(ref)


def test_flat_shapes_give_all_ones_morphing():
    tx, rx = default_geoms()
    env = sample_environment(EnvironmentConfig(3, 2, 0.01, 0.01, 1.0, LAMBDA), 0)
    ch = assemble_channel(env, tx, rx, np.zeros(4), np.zeros(4))
    np.testing.assert_array_equal(ch.F_t, np.ones_like(ch.F_t))
    np.testing.assert_array_equal(ch.F_r, np.ones_like(ch.F_r))
    np.testing.assert_allclose(ch.factored(), ch.H, rtol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_responses_are_unit_modulus(seed):
    rng = np.random.default_rng(seed)
    tx, rx = default_geoms()
    env = sample_environment(EnvironmentConfig(3, 3, 0.05, 0.05, 1.0, LAMBDA), rng)
    ch = assemble_channel(env, tx, rx, rng.uniform(-LAMBDA, LAMBDA, 4), rng.uniform(-LAMBDA, LAMBDA, 4))
    np.testing.assert_allclose(np.abs(ch.A_t * ch.F_t), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.abs(ch.A_r * ch.F_r), 1.0, atol=1e-12)


def test_link_model_matches_assembly():
    tx, rx = default_geoms()
    env = sample_environment(EnvironmentConfig(4, 3, 0.05, 0.05, 2.0, LAMBDA), 6)
    link = link_model(env, tx, rx)
    rng = np.random.default_rng(3)
    z, x = rng.uniform(-LAMBDA / 2, LAMBDA / 2, (2, 4))
    np.testing.assert_allclose(link.channel(z, x), assemble_channel(env, tx, rx, z, x).H, rtol=1e-12)


def test_shape_length_mismatch():
    tx, rx = default_geoms()
    env = sample_environment(EnvironmentConfig(1, 1, 0.0, 0.0, 1.0, LAMBDA), 0)
    with pytest.raises(DimensionError):
        assemble_channel(env, tx, rx, np.zeros(3), np.zeros(4))


def test_perturb_zero_is_identity():
    env = sample_environment(EnvironmentConfig(3, 2, 0.05, 0.05, 1.0, LAMBDA), 0)
    est = perturb_csi(env, 0.0, 0.0, 1)
    np.testing.assert_array_equal(est.gains, env.gains)
    np.testing.assert_array_equal(est.departure.azimuth, env.departure.azimuth)
    np.testing.assert_array_equal(est.arrival.elevation, env.arrival.elevation)


def test_perturb_angle_width():
    env = sample_environment(EnvironmentConfig(8, 500, 0.0, 0.0, 1.0, LAMBDA), 0)
    rmse = math.pi / 16
    est = perturb_csi(env, 0.0, rmse, 2)
    dev = est.arrival.azimuth - env.arrival.azimuth
    assert np.max(np.abs(dev)) <= math.sqrt(3) * rmse
    assert np.max(np.abs(dev)) > 0.98 * math.sqrt(3) * rmse
    assert np.sqrt(np.mean(dev**2)) == pytest.approx(rmse, rel=0.05)


def test_perturb_gain_variance():
    env = sample_environment(EnvironmentConfig(10, 1000, 0.0, 0.0, 1.0, LAMBDA), 0)
    v = 0.02
    err = perturb_csi(env, v, 0.0, 3).gains - env.gains
    assert abs(np.mean(np.abs(err) ** 2) / v - 1) < 0.2


def test_perturb_rejects_negative():
    env = sample_environment(EnvironmentConfig(1, 1, 0.0, 0.0, 1.0, LAMBDA), 0)
    with pytest.raises(ConfigurationError):
        perturb_csi(env, -1.0, 0.0, 0)


def test_path_angles_shape_check():
    with pytest.raises((DimensionError, ValueError)):
        PathAngles(np.zeros((2, 2)), np.zeros((2, 3)))
