"""Capacity gradients w.r.t. both surface shapes and projected gradient ascent.

With ``W_r = A_r (.) F_r(xi)``, ``W_t = A_t (.) F_t(zeta)`` and real diagonal
``K = kappa <k, o>``, the partial derivative of a row of ``W`` w.r.t. its own
deformation is ``j * W[n, :] * K``.  Pushing this through
``d log det B = tr(B^-1 dB)`` gives

    dC/dxi_n   = -(2 / ln 2) Im [S_r B_r^-1]_{nn}
    dC/dzeta_m = -(2 / ln 2) Im [Q_t B_t^-1 T]_{mm}

where ``S_r = W_r K_r O_t W_r^H``, ``Q_t = W_t K_t O_r W_t^H`` (so ``S_t = T Q_t``)
and ``B_t = I + T W_t O_r W_t^H`` is generally non-Hermitian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fimmimo.capacity import log2det_capacity, psd_sqrt
from fimmimo.channel import LinkModel
from fimmimo.errors import NumericalError

LN2 = math.log(2.0)


@dataclass
class GradientWorkspace:
    O_t: np.ndarray
    O_r: np.ndarray
    B_r: np.ndarray
    B_t: np.ndarray
    S_r: np.ndarray
    S_t: np.ndarray
    K_t: np.ndarray
    K_r: np.ndarray


def _as_matrix(T):
    return T.matrix if hasattr(T, "matrix") else np.asarray(T, dtype=complex)


def _noise(T, noise_power):
    if noise_power is None:
        noise_power = getattr(T, "noise_power", None)
    if noise_power is None:
        raise ValueError("noise_power is required when T is a plain array")
    return noise_power


def gradient_workspace(link: LinkModel, zeta, xi, T, noise_power=None) -> GradientWorkspace:
    """Build the intermediate matrices shared by both gradients."""
    Tm, s2 = _as_matrix(T), _noise(T, noise_power)
    W_t = link.tx_response(np.asarray(zeta, float))
    W_r = link.rx_response(np.asarray(xi, float))
    g = link.gains
    O_t = (g[:, None] * (W_t.conj().T @ Tm @ W_t) * g.conj()[None, :]) / s2
    O_r = (g.conj()[:, None] * (W_r.conj().T @ W_r) * g[None, :]) / s2
    B_r = np.eye(link.num_rx) + W_r @ O_t @ W_r.conj().T
    B_r = 0.5 * (B_r + B_r.conj().T)
    S_r = (W_r * link.kr) @ O_t @ W_r.conj().T
    B_t = np.eye(link.num_tx) + Tm @ W_t @ O_r @ W_t.conj().T
    S_t = Tm @ (W_t * link.kt) @ O_r @ W_t.conj().T
    return GradientWorkspace(O_t, O_r, B_r, B_t, S_r, S_t, link.kt, link.kr)


def _rx_from_workspace(ws: GradientWorkspace) -> np.ndarray:
    try:
        # B_r is Hermitian: diag(S_r B_r^-1) = conj(diag(B_r^-1 S_r^H))
        X = np.linalg.solve(ws.B_r, ws.S_r.conj().T)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular B_r") from exc
    return (2.0 / LN2) * np.imag(np.diagonal(X))


def _tx_from_workspace(ws: GradientWorkspace, Tm: np.ndarray, link: LinkModel, zeta) -> np.ndarray:
    W_t = link.tx_response(np.asarray(zeta, float))
    Q = (W_t * link.kt) @ ws.O_r @ W_t.conj().T
    try:
        Y = np.linalg.solve(ws.B_t, Tm)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular B_t") from exc
    return -(2.0 / LN2) * np.imag(np.sum(Q * Y.T, axis=1))


def grad_rx_shape(link: LinkModel, zeta, xi, T, noise_power=None) -> np.ndarray:
    """Gradient of capacity w.r.t. the receive deformations (bps/Hz per metre)."""
    return _rx_from_workspace(gradient_workspace(link, zeta, xi, T, noise_power))


def grad_tx_shape(link: LinkModel, zeta, xi, T, noise_power=None) -> np.ndarray:
    """Gradient of capacity w.r.t. the transmit deformations (bps/Hz per metre)."""
    ws = gradient_workspace(link, zeta, xi, T, noise_power)
    return _tx_from_workspace(ws, _as_matrix(T), link, zeta)


def capacity_gradients(link: LinkModel, zeta, xi, T, noise_power=None):
    """Both gradients from one workspace: ``(grad_zeta, grad_xi)``."""
    Tm, s2 = _as_matrix(T), _noise(T, noise_power)
    zeta = np.asarray(zeta, float)
    xi = np.asarray(xi, float)
    W_t = link.tx_response(zeta)
    W_r = link.rx_response(xi)
    g = link.gains
    Wt_h = W_t.conj().T
    Wr_h = W_r.conj().T
    O_t = (g[:, None] * (Wt_h @ Tm @ W_t) * g.conj()[None, :]) / s2
    O_r = (g.conj()[:, None] * (Wr_h @ W_r) * g[None, :]) / s2

    B_r = np.eye(link.num_rx) + W_r @ O_t @ Wr_h
    B_r = 0.5 * (B_r + B_r.conj().T)
    S_r = (W_r * link.kr) @ O_t @ Wr_h
    grad_xi = (2.0 / LN2) * np.imag(np.diagonal(np.linalg.solve(B_r, S_r.conj().T)))

    B_t = np.eye(link.num_tx) + Tm @ W_t @ O_r @ Wt_h
    Q = (W_t * link.kt) @ O_r @ Wt_h
    Y = np.linalg.solve(B_t, Tm)
    grad_zeta = -(2.0 / LN2) * np.imag(np.sum(Q * Y.T, axis=1))
    return grad_zeta, grad_xi


def link_capacity(link: LinkModel, zeta, xi, T, noise_power, T_sqrt=None) -> float:
    return max(0.0, log2det_capacity(link.channel(zeta, xi), _as_matrix(T), noise_power, T_sqrt))


@dataclass(frozen=True)
class LineSearchPolicy:
    """Backtracking parameters.

    ``initial_step`` is a displacement in wavelengths: the first trial moves the
    element with the steepest gradient by ``initial_step * wavelength``.
    """

    initial_step: float = 0.1
    shrink: float = 0.5
    armijo: float = 1e-4
    max_halvings: int = 30


@dataclass(frozen=True)
class AscentResult:
    zeta: np.ndarray
    xi: np.ndarray
    capacity: float
    step: float
    accepted: bool


def ascent_step(
    link: LinkModel,
    zeta,
    xi,
    T,
    noise_power,
    bounds: tuple[float, float],
    policy: LineSearchPolicy = LineSearchPolicy(),
    current_capacity: float | None = None,
) -> AscentResult:
    """One joint projected-gradient step on both shapes with backtracking.

    Capacity is evaluated at the projected point.  When no trial step passes the
    sufficient-increase test the inputs are returned unchanged.
    """
    zeta = np.asarray(zeta, float)
    xi = np.asarray(xi, float)
    Tm = _as_matrix(T)
    bz, bx = bounds
    L = psd_sqrt(Tm)
    c0 = link_capacity(link, zeta, xi, Tm, noise_power, L) if current_capacity is None else current_capacity
    gz, gx = capacity_gradients(link, zeta, xi, Tm, noise_power)
    # components that can only push further past a bound do not move
    gz = np.where((zeta >= bz) & (gz > 0) | (zeta <= -bz) & (gz < 0), 0.0, gz)
    gx = np.where((xi >= bx) & (gx > 0) | (xi <= -bx) & (gx < 0), 0.0, gx)
    peak = max(np.max(np.abs(gz), initial=0.0), np.max(np.abs(gx), initial=0.0))
    if not np.isfinite(peak) or peak == 0.0:
        return AscentResult(zeta, xi, c0, 0.0, False)

    eps = policy.initial_step * link.wavelength / peak
    for _ in range(policy.max_halvings + 1):
        z_new = np.clip(zeta + eps * gz, -bz, bz)
        x_new = np.clip(xi + eps * gx, -bx, bx)
        predicted = gz @ (z_new - zeta) + gx @ (x_new - xi)
        if predicted <= 0.0:
            break
        c_new = link_capacity(link, z_new, x_new, Tm, noise_power, L)
        if c_new >= c0 + policy.armijo * predicted:
            return AscentResult(z_new, x_new, c_new, eps, True)
        eps *= policy.shrink
    return AscentResult(zeta, xi, c0, 0.0, False)


@dataclass(frozen=True)
class MorphResult:
    zeta: np.ndarray
    xi: np.ndarray
    capacity: float
    steps: int
    trace: list = field(default_factory=list)


def inner_morph_loop(
    link: LinkModel,
    zeta,
    xi,
    T,
    noise_power,
    bounds: tuple[float, float],
    max_steps: int = 100,
    tol: float = 1e-4,
    policy: LineSearchPolicy = LineSearchPolicy(),
) -> MorphResult:
    """Repeat :func:`ascent_step` until the relative gain drops below ``tol``."""
    zeta = np.clip(np.asarray(zeta, float), -bounds[0], bounds[0])
    xi = np.clip(np.asarray(xi, float), -bounds[1], bounds[1])
    Tm = _as_matrix(T)
    cap = link_capacity(link, zeta, xi, Tm, noise_power)
    trace = [cap]
    steps = 0
    while steps < max_steps:
        steps += 1
        res = ascent_step(link, zeta, xi, Tm, noise_power, bounds, policy, current_capacity=cap)
        if not res.accepted:
            break
        gain = res.capacity - cap
        zeta, xi, cap = res.zeta, res.xi, res.capacity
        trace.append(cap)
        if gain <= tol * max(abs(trace[-2]), 1e-300):
            break
    return MorphResult(zeta, xi, cap, steps, trace)
