"""Clustered far-field multipath channel between two morphable arrays.

Path ``(l, g)`` contributes ``gain * a_r(xi) a_t(zeta)^H``, where each steering
vector is the flat-array response times a per-element phase
``exp(j * kappa * deformation * <k, o>)``.  Columns of every factor matrix are
ordered cluster-major: ``(1,1), ..., (1,G), ..., (L,G)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from fimmimo.errors import ConfigurationError, DimensionError
from fimmimo.geometry import ArrayGeometry, OrientationFrame, SurfaceShape

SPEED_OF_LIGHT = 299_792_458.0


def wavelength_from_frequency(frequency_hz: float) -> float:
    return SPEED_OF_LIGHT / frequency_hz


def pathloss(distance, reference_loss=1e-6, reference_distance=1.0, exponent=2.2):
    """Linear power path loss ``beta0^2 (d / d0)^(-alpha)``."""
    return reference_loss * (np.asarray(distance, dtype=float) / reference_distance) ** (-exponent)


def propagation_direction(azimuth, elevation) -> np.ndarray:
    """Unit direction(s) for the given angles; broadcasts, last axis has length 3."""
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    st = np.sin(el)
    return np.stack([st * np.cos(az), st * np.sin(az), np.cos(el)], axis=-1)


@dataclass(frozen=True)
class PathAngles:
    """Per-path azimuth/elevation, shape ``(L, G)``, with the cluster means, shape ``(L,)``."""

    azimuth: np.ndarray
    elevation: np.ndarray
    mean_azimuth: np.ndarray | None = None
    mean_elevation: np.ndarray | None = None

    def __post_init__(self):
        az = np.atleast_2d(np.asarray(self.azimuth, dtype=float))
        el = np.atleast_2d(np.asarray(self.elevation, dtype=float))
        if az.shape != el.shape:
            raise DimensionError("azimuth and elevation arrays differ in shape")
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)

    def directions(self) -> np.ndarray:
        """``(L*G, 3)`` propagation directions in cluster-major order."""
        return propagation_direction(self.azimuth.ravel(), self.elevation.ravel())


@dataclass(frozen=True)
class EnvironmentConfig:
    num_clusters: int = 8
    paths_per_cluster: int = 4
    azimuth_spread: float = math.pi / 128
    elevation_spread: float = math.pi / 128
    pathloss: float = 1.0
    wavelength: float = wavelength_from_frequency(28e9)

    def validate(self):
        if int(self.num_clusters) < 1:
            raise ConfigurationError("must be >= 1", "num_clusters")
        if int(self.paths_per_cluster) < 1:
            raise ConfigurationError("must be >= 1", "paths_per_cluster")
        if not self.azimuth_spread >= 0:
            raise ConfigurationError("must be >= 0", "azimuth_spread")
        if not self.elevation_spread >= 0:
            raise ConfigurationError("must be >= 0", "elevation_spread")
        if not self.pathloss > 0:
            raise ConfigurationError("must be > 0", "pathloss")
        if not self.wavelength > 0:
            raise ConfigurationError("must be > 0", "wavelength")


@dataclass(frozen=True)
class ScatteringEnvironment:
    departure: PathAngles
    arrival: PathAngles
    gains: np.ndarray  # (L, G) complex
    cluster_powers: np.ndarray  # (L,)
    pathloss: float
    wavelength: float

    def __post_init__(self):
        gains = np.atleast_2d(np.asarray(self.gains, dtype=complex))
        if gains.shape != self.departure.azimuth.shape or gains.shape != self.arrival.azimuth.shape:
            raise DimensionError("gains and path angles must share shape (L, G)")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "cluster_powers", np.asarray(self.cluster_powers, dtype=float))

    @property
    def num_clusters(self) -> int:
        return self.gains.shape[0]

    @property
    def paths_per_cluster(self) -> int:
        return self.gains.shape[1]

    @property
    def num_paths(self) -> int:
        return self.gains.size

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.wavelength


def _spread_uniform(rng, means, spread, paths):
    # uniform on mean +/- sqrt(3)*spread has standard deviation `spread`
    half = math.sqrt(3.0) * spread
    return means[:, None] + rng.uniform(-half, half, size=(means.size, paths))


def _complex_normal(rng, variance, size):
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_environment(config: EnvironmentConfig, rng_seed) -> ScatteringEnvironment:
    """Draw cluster means, per-path angles and path gains.

    ``rng_seed`` may be an integer seed or a ``numpy.random.Generator``.
    Departure and arrival cluster means are drawn independently from U[0, pi).
    """
    config.validate()
    rng = np.random.default_rng(rng_seed)
    L, G = int(config.num_clusters), int(config.paths_per_cluster)
    means = rng.uniform(0.0, math.pi, size=(4, L))
    dep = PathAngles(
        _spread_uniform(rng, means[0], config.azimuth_spread, G),
        _spread_uniform(rng, means[1], config.elevation_spread, G),
        means[0],
        means[1],
    )
    arr = PathAngles(
        _spread_uniform(rng, means[2], config.azimuth_spread, G),
        _spread_uniform(rng, means[3], config.elevation_spread, G),
        means[2],
        means[3],
    )
    powers = np.full(L, config.pathloss / L)
    gains = _complex_normal(rng, (powers / G)[:, None], (L, G))
    return ScatteringEnvironment(dep, arr, gains, powers, float(config.pathloss), float(config.wavelength))


def perturb_csi(env: ScatteringEnvironment, gain_mse: float, angle_rmse: float, rng_seed) -> ScatteringEnvironment:
    """Estimated environment: CSCG gain errors of variance ``gain_mse`` and uniform
    angle errors with standard deviation ``angle_rmse`` on every path angle."""
    if gain_mse < 0 or angle_rmse < 0:
        raise ConfigurationError("CSI error levels must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    shape = env.gains.shape
    gains = env.gains + _complex_normal(rng, gain_mse, shape)
    half = math.sqrt(3.0) * angle_rmse

    def jitter(angles: PathAngles) -> PathAngles:
        return replace(
            angles,
            azimuth=angles.azimuth + rng.uniform(-half, half, size=shape),
            elevation=angles.elevation + rng.uniform(-half, half, size=shape),
        )

    return replace(env, departure=jitter(env.departure), arrival=jitter(env.arrival), gains=gains)


def steering_vector(geom: ArrayGeometry, direction, wavelength: float) -> np.ndarray:
    """Flat-array response; ``direction`` may be a 3-vector or a ``(P, 3)`` stack,
    giving an ``(size,)`` vector or an ``(size, P)`` matrix."""
    d = np.asarray(direction, dtype=float)
    x, y = geom.grid_offsets()
    kappa = 2 * math.pi / wavelength
    phase = kappa * (np.multiply.outer(x, d @ geom.frame.i) + np.multiply.outer(y, d @ geom.frame.j))
    return np.exp(1j * phase)


def morphing_response(shape: SurfaceShape, frame: OrientationFrame, direction, wavelength: float) -> np.ndarray:
    """Extra per-element phase due to the deformation; same broadcasting as :func:`steering_vector`."""
    d = np.asarray(direction, dtype=float)
    kappa = 2 * math.pi / wavelength
    return np.exp(1j * kappa * np.multiply.outer(shape.deformations, d @ frame.k))


def _deformations(shape, size, side):
    z = shape.deformations if isinstance(shape, SurfaceShape) else np.ravel(np.asarray(shape, dtype=float))
    if z.size != size:
        raise DimensionError(f"{side} shape has {z.size} entries, array has {size} elements")
    return z


@dataclass(frozen=True)
class LinkModel:
    """Shape-independent factors of one link, reused across optimizer iterations.

    ``kt`` and ``kr`` hold ``kappa * <k, o>`` per path, so that the morphing
    factor is ``exp(1j * outer(deformations, kt))``.
    """

    A_t: np.ndarray  # (M, LG)
    A_r: np.ndarray  # (N, LG)
    kt: np.ndarray  # (LG,)
    kr: np.ndarray  # (LG,)
    gains: np.ndarray  # (LG,)
    wavelength: float

    @property
    def num_tx(self) -> int:
        return self.A_t.shape[0]

    @property
    def num_rx(self) -> int:
        return self.A_r.shape[0]

    def tx_response(self, zeta) -> np.ndarray:
        """A_t (.) F_t(zeta)."""
        return self.A_t * np.exp(1j * np.multiply.outer(zeta, self.kt))

    def rx_response(self, xi) -> np.ndarray:
        return self.A_r * np.exp(1j * np.multiply.outer(xi, self.kr))

    def channel(self, zeta, xi) -> np.ndarray:
        return (self.rx_response(xi) * self.gains) @ self.tx_response(zeta).conj().T


def link_model(env: ScatteringEnvironment, tx_geom: ArrayGeometry, rx_geom: ArrayGeometry) -> LinkModel:
    o_t = env.departure.directions()
    o_r = env.arrival.directions()
    kappa = env.wavenumber
    return LinkModel(
        A_t=steering_vector(tx_geom, o_t, env.wavelength),
        A_r=steering_vector(rx_geom, o_r, env.wavelength),
        kt=kappa * (o_t @ tx_geom.frame.k),
        kr=kappa * (o_r @ rx_geom.frame.k),
        gains=env.gains.ravel().copy(),
        wavelength=env.wavelength,
    )


@dataclass(frozen=True)
class ChannelMatrix:
    H: np.ndarray
    A_t: np.ndarray
    A_r: np.ndarray
    F_t: np.ndarray
    F_r: np.ndarray
    gains: np.ndarray  # diagonal of the path-gain matrix, length LG

    @property
    def shape(self):
        return self.H.shape

    def factored(self) -> np.ndarray:
        """Recompute H from the stored factors."""
        return ((self.A_r * self.F_r) * self.gains) @ (self.A_t * self.F_t).conj().T


def assemble_channel(env, tx_geom, rx_geom, zeta, xi) -> ChannelMatrix:
    """Matrix-form channel ``[A_r (.) F_r] diag(gains) [A_t (.) F_t]^H``."""
    link = link_model(env, tx_geom, rx_geom)
    z = _deformations(zeta, tx_geom.size, "transmit")
    x = _deformations(xi, rx_geom.size, "receive")
    F_t = np.exp(1j * np.multiply.outer(z, link.kt))
    F_r = np.exp(1j * np.multiply.outer(x, link.kr))
    H = ((link.A_r * F_r) * link.gains) @ (link.A_t * F_t).conj().T
    return ChannelMatrix(H, link.A_t, link.A_r, F_t, F_r, link.gains)


def assemble_channel_sum(env, tx_geom, rx_geom, zeta, xi) -> np.ndarray:
    """Path-by-path rank-one sum; an independent route to the same H."""
    z = SurfaceShape(_deformations(zeta, tx_geom.size, "transmit"))
    x = SurfaceShape(_deformations(xi, rx_geom.size, "receive"))
    H = np.zeros((rx_geom.size, tx_geom.size), dtype=complex)
    lam = env.wavelength
    for l in range(env.num_clusters):
        for g in range(env.paths_per_cluster):
            o_t = propagation_direction(env.departure.azimuth[l, g], env.departure.elevation[l, g])
            o_r = propagation_direction(env.arrival.azimuth[l, g], env.arrival.elevation[l, g])
            a_t = steering_vector(tx_geom, o_t, lam) * morphing_response(z, tx_geom.frame, o_t, lam)
            a_r = steering_vector(rx_geom, o_r, lam) * morphing_response(x, rx_geom.frame, o_r, lam)
            H += env.gains[l, g] * np.outer(a_r, a_t.conj())
    return H
