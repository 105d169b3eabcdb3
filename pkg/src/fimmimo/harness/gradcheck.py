"""Finite-difference check of the analytic shape gradients.

The reference derivative is a central difference of the capacity evaluated in
30-digit arithmetic straight from the path angles, so it shares no code with
the factored channel or the gradient formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np

from fimmimo.channel import EnvironmentConfig, link_model, sample_environment
from fimmimo.geometry import ArrayGeometry, OrientationAngles, frame_from_angles
from fimmimo.morphing import capacity_gradients

GRAD_TOL = 1e-5
STEP_WAVELENGTHS = 1e-7
DIGITS = 30


@dataclass
class GradInstance:
    env: object
    tx: ArrayGeometry
    rx: ArrayGeometry
    zeta: np.ndarray
    xi: np.ndarray
    T: np.ndarray
    noise_power: float


def random_instance(rng, max_side=2, max_clusters=4, max_paths=4, wavelength=1.0) -> GradInstance:
    """Random small problem: arrays up to ``max_side`` x ``max_side`` (so M, N <= 4)."""

    def geom():
        angles = OrientationAngles(rng.uniform(0, math.pi), rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
        d = wavelength * rng.uniform(0.2, 0.7)
        return ArrayGeometry(int(rng.integers(1, max_side + 1)), int(rng.integers(1, max_side + 1)),
                             d, d, frame_from_angles(angles))

    tx, rx = geom(), geom()
    cfg = EnvironmentConfig(int(rng.integers(1, max_clusters + 1)), int(rng.integers(1, max_paths + 1)),
                            rng.uniform(0, 0.2), rng.uniform(0, 0.2), 1.0, wavelength)
    env = sample_environment(cfg, rng)
    bound = 0.5 * wavelength
    A = rng.standard_normal((tx.size, tx.size)) + 1j * rng.standard_normal((tx.size, tx.size))
    T = A @ A.conj().T
    T /= np.trace(T).real
    return GradInstance(env, tx, rx, rng.uniform(-bound, bound, tx.size), rng.uniform(-bound, bound, rx.size),
                        T, float(10 ** rng.uniform(-1.5, 0.5)))


def _mp_vec(v):
    return [mp.mpf(float(x)) for x in v]


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def mp_capacity(inst: GradInstance, zeta, xi) -> mp.mpf:
    """Capacity from the explicit element positions and path directions."""
    env = inst.env
    kappa = 2 * mp.pi / mp.mpf(env.wavelength)

    def phases(geom, defo, az, el):
        f = geom.frame
        i, j, k = _mp_vec(f.i), _mp_vec(f.j), _mp_vec(f.k)
        out = []
        for m in range(geom.size):
            x = mp.mpf(float(geom.spacing_x)) * (m % geom.counts_x)
            y = mp.mpf(float(geom.spacing_y)) * (m // geom.counts_x)
            pos = [x * i[c] + y * j[c] + defo[m] * k[c] for c in range(3)]
            row = []
            for a, e in zip(az, el):
                a, e = mp.mpf(float(a)), mp.mpf(float(e))
                o = [mp.sin(e) * mp.cos(a), mp.sin(e) * mp.sin(a), mp.cos(e)]
                row.append(mp.expj(kappa * _dot(pos, o)))
            out.append(row)
        return out

    at = phases(inst.tx, zeta, env.departure.azimuth.ravel(), env.departure.elevation.ravel())
    ar = phases(inst.rx, xi, env.arrival.azimuth.ravel(), env.arrival.elevation.ravel())
    gains = [mp.mpc(complex(g)) for g in env.gains.ravel()]
    M, N = inst.tx.size, inst.rx.size
    H = mp.matrix(N, M)
    for n in range(N):
        for m in range(M):
            H[n, m] = mp.fsum(g * ar[n][p] * mp.conj(at[m][p]) for p, g in enumerate(gains))
    T = mp.matrix([[mp.mpc(complex(v)) for v in row] for row in inst.T])
    A = mp.eye(N) + H * T * H.H / mp.mpf(inst.noise_power)
    return mp.re(mp.log(mp.det(A))) / mp.log(2)


def finite_difference_gradients(inst: GradInstance, step=None):
    step = STEP_WAVELENGTHS * inst.env.wavelength if step is None else step
    with mp.workdps(DIGITS):
        h = mp.mpf(step)
        z0, x0 = _mp_vec(inst.zeta), _mp_vec(inst.xi)

        def central(which, idx):
            zp, zm, xp, xm = list(z0), list(z0), list(x0), list(x0)
            if which == "t":
                zp[idx] += h
                zm[idx] -= h
            else:
                xp[idx] += h
                xm[idx] -= h
            return float((mp_capacity(inst, zp, xp) - mp_capacity(inst, zm, xm)) / (2 * h))

        gz = np.array([central("t", m) for m in range(inst.tx.size)])
        gx = np.array([central("r", n) for n in range(inst.rx.size)])
    return gz, gx


def relative_error(analytic, reference, scale) -> float:
    """Largest elementwise relative error.

    The denominator is floored at ``1e-8 * scale`` (pass the wavenumber, i.e.
    one bit per radian of phase per metre) so that structurally zero
    components, e.g. the receive gradient of a single-path channel, compare
    against roundoff instead of dividing by zero.
    """
    a, r = np.asarray(analytic), np.asarray(reference)
    return float(np.max(np.abs(a - r) / np.maximum(np.abs(r), 1e-8 * scale), initial=0.0))


def run_gradcheck(seed: int = 0, instances: int = 50) -> float:
    """Max relative error between analytic and finite-difference gradients."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        inst = random_instance(rng)
        link = link_model(inst.env, inst.tx, inst.rx)
        gz, gx = capacity_gradients(link, inst.zeta, inst.xi, inst.T, inst.noise_power)
        fz, fx = finite_difference_gradients(inst)
        kappa = inst.env.wavenumber
        worst = max(worst, relative_error(gz, fz, kappa), relative_error(gx, fx, kappa))
    return worst
