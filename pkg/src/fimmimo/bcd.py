"""Alternating optimisation of the transmit covariance and both surface shapes."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from fimmimo.capacity import TransmitCovariance, equal_power_covariance, log2det_capacity, waterfill_matrix
from fimmimo.channel import LinkModel
from fimmimo.errors import ConfigurationError
from fimmimo.geometry import SurfaceShape
from fimmimo.morphing import LineSearchPolicy, inner_morph_loop


class Scheme(str, enum.Enum):
    FIM_WPA = "FIM-WPA"
    FIM_EPA = "FIM-EPA"
    RAA_WPA = "RAA-WPA"
    RAA_EPA = "RAA-EPA"


@dataclass(frozen=True)
class BcdConfig:
    max_outer_iterations: int = 50
    convergence_threshold_db: float = -30.0
    num_random_inits: int | str = "auto"
    inner_max_steps: int = 100
    inner_tol: float = 1e-4
    line_search: LineSearchPolicy = LineSearchPolicy()
    early_stop: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_outer_iterations < 1:
            raise ConfigurationError("must be >= 1", "max_outer_iterations")
        if not math.isfinite(self.convergence_threshold_db):
            raise ConfigurationError("must be finite", "convergence_threshold_db")
        if self.num_random_inits != "auto" and int(self.num_random_inits) < 0:
            raise ConfigurationError("must be >= 0 or 'auto'", "num_random_inits")

    @property
    def convergence_ratio(self) -> float:
        return 10.0 ** (self.convergence_threshold_db / 10.0)


@dataclass(frozen=True)
class BcdReport:
    capacity_trace: np.ndarray
    zeta: SurfaceShape
    xi: SurfaceShape
    covariance: TransmitCovariance
    converged: bool
    iterations_used: int
    init_candidate_capacities: np.ndarray
    initial_capacity: float
    shape_trace: list = field(default_factory=list, repr=False)

    @property
    def capacity(self) -> float:
        return float(self.capacity_trace[-1]) if len(self.capacity_trace) else self.initial_capacity


def auto_candidate_count(bounds, wavelength) -> int:
    """Rough number of gain peaks inside the widest morphing range, floored at 2."""
    return max(2, math.ceil(4.0 * max(bounds) / wavelength - 1e-9))


def _covariance_for(link, zeta, xi, P_t, noise_power, power_allocation):
    if power_allocation == "waterfill":
        return waterfill_matrix(link.channel(zeta, xi), P_t, noise_power)
    return np.eye(link.num_tx, dtype=complex) * (P_t / link.num_tx)


def _candidates(link, bounds, num_candidates, seed):
    bz, bx = bounds
    M, N = link.num_tx, link.num_rx
    if num_candidates == "auto":
        num_candidates = auto_candidate_count(bounds, link.wavelength)
    rng = np.random.default_rng(seed)
    out = [(np.zeros(M), np.zeros(N))]
    if bz > 0 or bx > 0:
        for _ in range(int(num_candidates)):
            out.append((rng.uniform(-bz, bz, M), rng.uniform(-bx, bx, N)))
    return out


def _score(link, candidates, P_t, noise_power, power_allocation):
    caps = []
    for z, x in candidates:
        T = _covariance_for(link, z, x, P_t, noise_power, power_allocation)
        caps.append(max(0.0, log2det_capacity(link.channel(z, x), T, noise_power)))
    return np.array(caps)


def initialize_shapes(
    link: LinkModel,
    bounds: tuple[float, float],
    P_t: float,
    noise_power: float,
    num_candidates: int | str = "auto",
    seed=0,
    power_allocation: str = "equal",
):
    """Pick the best of the flat shape and ``num_candidates`` uniform random shapes.

    Returns ``(zeta0, xi0, capacities)``; ``capacities[0]`` belongs to the flat
    candidate.  ``power_allocation`` selects the covariance used for scoring
    (``"equal"`` or ``"waterfill"``).
    """
    candidates = _candidates(link, bounds, num_candidates, seed)
    caps = _score(link, candidates, P_t, noise_power, power_allocation)
    best = int(np.argmax(caps))
    return candidates[best][0], candidates[best][1], caps


def run_bcd(
    link: LinkModel,
    bounds: tuple[float, float],
    P_t: float,
    noise_power: float,
    config: BcdConfig = BcdConfig(),
    initial_shapes=None,
    record_shapes: bool = False,
) -> BcdReport:
    """Alternate water-filling and shape ascent until the fractional capacity
    increase falls below the configured threshold.

    Without ``initial_shapes`` the loop is started from the flat shape and from
    every random candidate, and the best finished run is reported.  The flat
    start makes the result at least the rigid-array capacity.
    ``initial_shapes`` (a ``(zeta, xi)`` pair) runs a single warm start.
    """
    if initial_shapes is None:
        starts = _candidates(link, bounds, config.num_random_inits, config.seed)
    else:
        starts = [tuple(np.asarray(s, float) for s in initial_shapes)]
    cand = _score(link, starts, P_t, noise_power, "waterfill")
    best = None
    for zeta, xi in starts:
        rep = _bcd_from(link, zeta, xi, bounds, P_t, noise_power, config, record_shapes, cand)
        if best is None or rep.capacity > best.capacity:
            best = rep
    return best


def _bcd_from(link, zeta, xi, bounds, P_t, noise_power, config, record_shapes, cand) -> BcdReport:
    bz, bx = bounds
    zeta = np.clip(zeta, -bz, bz)
    xi = np.clip(xi, -bx, bx)
    T = waterfill_matrix(link.channel(zeta, xi), P_t, noise_power)
    c_prev = max(0.0, log2det_capacity(link.channel(zeta, xi), T, noise_power))
    initial = c_prev
    trace, shapes = [], []
    converged = False
    for _ in range(config.max_outer_iterations):
        T = waterfill_matrix(link.channel(zeta, xi), P_t, noise_power)
        res = inner_morph_loop(
            link, zeta, xi, T, noise_power, bounds, config.inner_max_steps, config.inner_tol, config.line_search
        )
        zeta, xi = res.zeta, res.xi
        c = res.capacity
        trace.append(c)
        if record_shapes:
            shapes.append((zeta.copy(), xi.copy()))
        if c_prev <= 0.0:
            converged = True
            break
        if (c - c_prev) / c_prev < config.convergence_ratio:
            converged = True
            if config.early_stop:
                break
        c_prev = c
    cov = TransmitCovariance(T, P_t, noise_power)
    return BcdReport(
        capacity_trace=np.array(trace),
        zeta=SurfaceShape(zeta, bz),
        xi=SurfaceShape(xi, bx),
        covariance=cov,
        converged=converged,
        iterations_used=len(trace),
        init_candidate_capacities=cand,
        initial_capacity=initial,
        shape_trace=shapes,
    )


def run_scheme(
    scheme,
    link: LinkModel,
    bounds: tuple[float, float],
    P_t: float,
    noise_power: float,
    config: BcdConfig = BcdConfig(),
):
    """Return ``(capacity, zeta, xi, T)`` achieved by one benchmark scheme."""
    scheme = Scheme(scheme)
    M, N = link.num_tx, link.num_rx
    if scheme is Scheme.FIM_WPA:
        rep = run_bcd(link, bounds, P_t, noise_power, config)
        return rep.capacity, rep.zeta.deformations, rep.xi.deformations, rep.covariance.matrix
    if scheme is Scheme.FIM_EPA:
        T = np.eye(M, dtype=complex) * (P_t / M)
        res = None
        for zeta, xi in _candidates(link, bounds, config.num_random_inits, config.seed):
            r = inner_morph_loop(
                link, zeta, xi, T, noise_power, bounds,
                config.inner_max_steps * config.max_outer_iterations, config.inner_tol, config.line_search,
            )
            if res is None or r.capacity > res.capacity:
                res = r
        return res.capacity, res.zeta, res.xi, T
    zeta, xi = np.zeros(M), np.zeros(N)
    H = link.channel(zeta, xi)
    if scheme is Scheme.RAA_WPA:
        T = waterfill_matrix(H, P_t, noise_power)
    else:
        T = equal_power_covariance(M, P_t, noise_power).matrix
    return max(0.0, log2det_capacity(H, T, noise_power)), zeta, xi, T
