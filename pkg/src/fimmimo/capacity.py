"""MIMO capacity and the water-filling transmit covariance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fimmimo.errors import ContractViolation, DimensionError

HERMITIAN_TOL = 1e-10
ZERO_MODE_RATIO = 1e-14
BISECTION_TOL = 1e-12
BISECTION_MAX_ITER = 200
LN2 = math.log(2.0)


@dataclass(frozen=True)
class TransmitCovariance:
    matrix: np.ndarray
    power_budget: float
    noise_power: float

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        if T.shape[0] != T.shape[1]:
            raise DimensionError("covariance must be square")
        scale = max(1.0, float(np.max(np.abs(T))) if T.size else 1.0)
        if np.max(np.abs(T - T.conj().T)) > HERMITIAN_TOL * scale:
            raise ContractViolation("covariance is not Hermitian")
        if np.linalg.eigvalsh(T).min() < -HERMITIAN_TOL * scale:
            raise ContractViolation("covariance is not positive semidefinite")
        if np.trace(T).real > self.power_budget + 1e-9:
            raise ContractViolation("covariance trace exceeds the power budget")
        if not self.noise_power > 0:
            raise ContractViolation("noise power must be positive")
        T.setflags(write=False)
        object.__setattr__(self, "matrix", T)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class EigenmodeSolution:
    U: np.ndarray
    eigenvalues: np.ndarray  # descending
    allocations: np.ndarray
    water_level: float
    degenerate: bool = False


def _matrix(H):
    return H.H if hasattr(H, "H") else np.atleast_2d(np.asarray(H, dtype=complex))


def psd_sqrt(T: np.ndarray) -> np.ndarray:
    """A factor ``L`` with ``L L^H = T`` for a Hermitian PSD ``T``."""
    w, V = np.linalg.eigh(0.5 * (T + T.conj().T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def log2det_capacity(H: np.ndarray, T: np.ndarray, noise_power: float, T_sqrt=None) -> float:
    """``log2 det(I + H T H^H / noise)`` from the singular values of ``H T^(1/2)``.

    Singular values carry absolute error relative to the largest one, so weak
    modes next to very strong ones stay accurate; a determinant of the full
    matrix would not.  ``T_sqrt`` skips the factorisation of ``T``.
    """
    L = psd_sqrt(T) if T_sqrt is None else T_sqrt
    s = np.linalg.svd(H @ L, compute_uv=False)
    return float(np.sum(np.log1p(s * s / noise_power)) / LN2)


def capacity(H, cov: TransmitCovariance) -> float:
    """Capacity in bps/Hz of channel ``H`` (array or ChannelMatrix) under ``cov``."""
    Hm = _matrix(H)
    if not isinstance(cov, TransmitCovariance):
        raise ContractViolation("capacity() needs a validated TransmitCovariance")
    if Hm.shape[1] != cov.size:
        raise DimensionError(f"H has {Hm.shape[1]} columns, covariance is {cov.size}x{cov.size}")
    return max(0.0, log2det_capacity(Hm, cov.matrix, cov.noise_power))


def equal_power_covariance(M: int, P_t: float, noise_power: float = 1.0) -> TransmitCovariance:
    if M < 1 or not P_t > 0:
        raise ContractViolation("need M >= 1 and P_t > 0")
    return TransmitCovariance(np.eye(M) * (P_t / M), P_t, noise_power)


def waterfill(eigenvalues, P_t: float, noise_power: float) -> tuple[np.ndarray, float]:
    """Power per mode and water level for channel eigenvalues ``lambda_m^2``.

    The water level is bracketed and bisected until the poured power matches
    ``P_t``; the final level is then recomputed exactly on the active set.
    Modes weaker than ``1e-14`` times the strongest receive no power.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    p = np.zeros_like(lam)
    top = lam.max(initial=0.0)
    active = lam > ZERO_MODE_RATIO * top if top > 0 else np.zeros(lam.shape, bool)
    if not active.any():
        return p, 0.0
    floors = noise_power / lam[active]

    def poured(mu):
        return np.maximum(mu - floors, 0.0).sum()

    lo, hi = 0.0, P_t + floors.max()
    for _ in range(BISECTION_MAX_ITER):
        mu = 0.5 * (lo + hi)
        residual = poured(mu) - P_t
        if abs(residual) <= BISECTION_TOL:
            break
        if residual > 0:
            hi = mu
        else:
            lo = mu
    on = floors < mu
    if not on.any():
        on[np.argmin(floors)] = True
    k = on.sum()
    f = floors[on]
    mu = (P_t + f.sum()) / k
    # mu - f_m cancels badly when floors dwarf P_t; pairwise differences do not
    share = np.maximum((P_t + (f[None, :] - f[:, None]).sum(axis=1)) / k, 0.0)
    idx = np.flatnonzero(active)[on]
    p[idx] = share * (P_t / share.sum())
    return p, float(mu)


def eigenmode_waterfill(H, P_t: float, noise_power: float) -> tuple[TransmitCovariance, EigenmodeSolution]:
    """Optimal covariance ``U diag(p) U^H`` on the eigenmodes of ``H^H H``.

    A zero channel returns the equal-power covariance with ``degenerate=True``.
    """
    if not (P_t > 0 and noise_power > 0):
        raise ContractViolation("need P_t > 0 and noise_power > 0")
    Hm = _matrix(H)
    M = Hm.shape[1]
    gram = Hm.conj().T @ Hm
    w, U = np.linalg.eigh(0.5 * (gram + gram.conj().T))
    order = np.argsort(w)[::-1]
    w, U = np.clip(w[order], 0.0, None), U[:, order]
    p, mu = waterfill(w, P_t, noise_power)
    if not p.any():
        cov = equal_power_covariance(M, P_t, noise_power)
        return cov, EigenmodeSolution(U, w, np.full(M, P_t / M), 0.0, degenerate=True)
    T = (U * p) @ U.conj().T
    T = 0.5 * (T + T.conj().T)
    return TransmitCovariance(T, P_t, noise_power), EigenmodeSolution(U, w, p, mu)


def waterfill_matrix(H: np.ndarray, P_t: float, noise_power: float) -> np.ndarray:
    """Raw-array variant of :func:`eigenmode_waterfill` for inner loops."""
    gram = H.conj().T @ H
    w, U = np.linalg.eigh(0.5 * (gram + gram.conj().T))
    p, _ = waterfill(np.clip(w, 0.0, None), P_t, noise_power)
    if not p.any():
        return np.eye(H.shape[1], dtype=complex) * (P_t / H.shape[1])
    T = (U * p) @ U.conj().T
    return 0.5 * (T + T.conj().T)


def eigenchannel_gains(H) -> np.ndarray:
    """Eigenvalues of ``H^H H`` in descending order (squared singular values)."""
    Hm = _matrix(H)
    gram = Hm.conj().T @ Hm
    w = np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))
    return np.clip(w[::-1], 0.0, None)


def to_db(values, floor=-math.inf):
    v = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(v)
    return np.where(v > 0, out, floor)
