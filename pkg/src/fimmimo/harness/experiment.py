"""Monte Carlo sweeps over the benchmark schemes and result tables."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

import fimmimo
from fimmimo.bcd import Scheme, run_bcd, run_scheme
from fimmimo.capacity import eigenchannel_gains, log2det_capacity, to_db
from fimmimo.channel import (
    EnvironmentConfig,
    link_model,
    pathloss,
    perturb_csi,
    sample_environment,
    wavelength_from_frequency,
)
from fimmimo.errors import ConfigurationError
from fimmimo.geometry import ArrayGeometry, OrientationAngles, frame_from_angles
from fimmimo.harness.config import ExperimentConfig, validate_config

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
THREADS_ENV = "FIM_MIMO_THREADS"


def splitmix64(x: int) -> int:
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, index: int) -> int:
    """The ``index``-th output of a splitmix64 stream started at ``base``.

    Realisation ``r`` of an experiment uses ``derive_seed(base_seed, r)``; its
    environment, optimiser and CSI-error generators use
    ``derive_seed(that, 0 | 1 | 2)``.
    """
    return splitmix64((base + index * GOLDEN_GAMMA) & MASK64)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class Scenario:
    """One fully resolved sweep point in SI units."""

    tx_geom: ArrayGeometry
    rx_geom: ArrayGeometry
    environment: EnvironmentConfig
    power: float
    noise_power: float
    bounds: tuple
    gain_mse: float
    angle_rmse: float

    @property
    def wavelength(self) -> float:
        return self.environment.wavelength


def _frame(deg):
    az, el, spin = (math.radians(a) for a in deg)
    return frame_from_angles(OrientationAngles(az, el, spin))


def resolve_scenario(cfg: ExperimentConfig, value=None) -> Scenario:
    """Apply one sweep value on top of the configured defaults."""
    s, a, e, c = cfg.system, cfg.array, cfg.environment, cfg.csi
    sweep = cfg.sweep
    tx_counts, rx_counts = tuple(a.tx_counts), tuple(a.rx_counts)
    spacing, morph = a.spacing, a.morphing_range
    power_dbm = s.power_dbm
    L, G, spread_deg = e.clusters, e.paths_per_cluster, e.angular_spread_deg
    gain_mse, rmse_deg = c.gain_mse, c.angle_rmse_deg
    if sweep == "antennas":
        side = math.isqrt(int(value))
        tx_counts = rx_counts = (side, side)
    elif sweep == "spacing":
        spacing = float(value)
        per_axis = int(math.floor(a.aperture / spacing + 1e-9)) + 1
        tx_counts = rx_counts = (per_axis, per_axis)
    elif sweep == "power_dbm":
        power_dbm = float(value)
    elif sweep == "clusters":
        L = int(value)
    elif sweep == "paths":
        G = int(value)
    elif sweep == "spread":
        spread_deg = float(value)
    elif sweep == "paths_spread":
        G, spread_deg = int(value[0]), float(value[1])
    elif sweep == "morphing_range":
        morph = float(value)
    elif sweep == "gain_mse":
        gain_mse = float(value)
    elif sweep == "angle_rmse":
        rmse_deg = float(value)

    lam = wavelength_from_frequency(s.frequency_hz)
    tx = ArrayGeometry(tx_counts[0], tx_counts[1], spacing * lam, spacing * lam, _frame(s.tx_orientation), s.tx_position)
    rx = ArrayGeometry(rx_counts[0], rx_counts[1], spacing * lam, spacing * lam, _frame(s.rx_orientation), s.rx_position)
    distance = math.dist(s.tx_position, s.rx_position)
    beta2 = float(pathloss(distance, db_to_linear(s.reference_loss_db), s.reference_distance, s.pathloss_exponent))
    spread = math.radians(spread_deg)
    env = EnvironmentConfig(int(L), int(G), spread, spread, beta2, lam)
    return Scenario(
        tx_geom=tx,
        rx_geom=rx,
        environment=env,
        power=dbm_to_watts(power_dbm),
        noise_power=dbm_to_watts(s.noise_dbm),
        bounds=(morph * lam, morph * lam),
        gain_mse=gain_mse * beta2 / (L * G),
        angle_rmse=math.radians(rmse_deg),
    )


def _realization_links(sc: Scenario, seed: int):
    env = sample_environment(sc.environment, derive_seed(seed, 0))
    true_link = link_model(env, sc.tx_geom, sc.rx_geom)
    if sc.gain_mse > 0 or sc.angle_rmse > 0:
        est = perturb_csi(env, sc.gain_mse, sc.angle_rmse, derive_seed(seed, 2))
        return true_link, link_model(est, sc.tx_geom, sc.rx_geom)
    return true_link, true_link


def run_realization(cfg: ExperimentConfig, value, r: int) -> dict:
    """Capacities (and final channels) of every scheme on realisation ``r``.

    The optimiser works on the estimated link; capacity is always measured on
    the true one.
    """
    sc = resolve_scenario(cfg, value)
    seed = derive_seed(cfg.seed, r)
    true_link, est_link = _realization_links(sc, seed)
    bcd_cfg = cfg.bcd_config(derive_seed(seed, 1))
    out = {}
    for name in cfg.schemes:
        _, z, x, T = run_scheme(name, est_link, sc.bounds, sc.power, sc.noise_power, bcd_cfg)
        H = true_link.channel(z, x)
        out[name] = (max(0.0, log2det_capacity(H, T, sc.noise_power)), eigenchannel_gains(H))
    return out


def _task(args):
    cfg, value, r = args
    return run_realization(cfg, value, r)


def _convergence_task(args):
    cfg, value, r = args
    return convergence_realization(cfg, value, r)


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(threads)
    except ValueError:
        raise ConfigurationError(f"not an integer: {threads!r}", "threads") from None
    if n < 1:
        raise ConfigurationError("must be >= 1", "threads")
    return n


def _map(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return repr(x)
    return str(x)


@dataclass
class ResultTable:
    meta: dict
    columns: list
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["# " + json.dumps(self.meta, sort_keys=True), ",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(row[c]) for c in self.columns))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v

        rows = [{k: clean(v) for k, v in row.items()} for row in self.rows]
        return json.dumps({"meta": self.meta, "rows": rows}, sort_keys=True, indent=1) + "\n"

    def render(self, fmt: str = "csv") -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ConfigurationError(f"unknown format {fmt!r}", "format")


def _meta(cfg: ExperimentConfig) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": fimmimo.__version__,
        "kind": cfg.kind,
        "sweep": cfg.sweep,
        "realizations": cfg.realizations,
    }


def _sweep_label(value):
    if isinstance(value, tuple):
        return "x".join(_fmt(float(v)) for v in value)
    return float(value)


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    """Run every (sweep value, realisation) pair and aggregate per scheme.

    Realisation ``r`` uses the same seed at every sweep value, so sweep points
    and schemes are paired.
    """
    validate_config(cfg)
    if cfg.kind == "convergence":
        return convergence_trace_experiment(cfg, threads)
    tasks = [(cfg, v, r) for v in cfg.values for r in range(cfg.realizations)]
    results = _map(_task, tasks, threads)
    n = cfg.realizations
    if cfg.kind == "eigengains":
        return _eigengain_table(cfg, results)
    columns = ["sweep", "value", "scheme", "mean", "min", "max", "n"]
    table = ResultTable(_meta(cfg), columns)
    if cfg.keep_realizations:
        table.columns.append("capacities")
    for i, v in enumerate(cfg.values):
        block = results[i * n:(i + 1) * n]
        for scheme in cfg.schemes:
            caps = [res[scheme][0] for res in block]
            row = {
                "sweep": cfg.sweep,
                "value": _sweep_label(v),
                "scheme": scheme,
                "mean": math.fsum(caps) / n,
                "min": min(caps),
                "max": max(caps),
                "n": n,
            }
            if cfg.keep_realizations:
                row["capacities"] = ";".join(_fmt(c) for c in caps)
            table.rows.append(row)
    return table


def _eigengain_table(cfg, results):
    n = cfg.realizations
    columns = ["sweep", "value", "scheme", "mode", "mean_db", "min_db", "max_db", "n"]
    table = ResultTable(_meta(cfg), columns)
    for i, v in enumerate(cfg.values):
        block = results[i * n:(i + 1) * n]
        for scheme in cfg.schemes:
            gains_db = np.array([to_db(res[scheme][1]) for res in block])
            for mode in range(gains_db.shape[1]):
                col = gains_db[:, mode]
                mean = -math.inf if np.isneginf(col).any() else math.fsum(col) / n
                table.rows.append({
                    "sweep": cfg.sweep,
                    "value": _sweep_label(v),
                    "scheme": scheme,
                    "mode": mode + 1,
                    "mean_db": float(mean),
                    "min_db": float(col.min()),
                    "max_db": float(col.max()),
                    "n": n,
                })
    return table


def convergence_realization(cfg: ExperimentConfig, value, r: int) -> list:
    """Staged BCD run: each stage widens the morphing range and warm-starts
    from the previous stage's shapes.  Returns one row per outer iteration
    (iteration 0 is the rigid-array water-filled capacity)."""
    sc = resolve_scenario(cfg, value)
    seed = derive_seed(cfg.seed, r)
    link, est = _realization_links(sc, seed)
    lam = sc.wavelength
    base = cfg.bcd_config(derive_seed(seed, 1))
    base = replace(base, max_outer_iterations=cfg.stage_iterations, early_stop=False)
    raa = run_scheme(Scheme.RAA_WPA, link, (0.0, 0.0), sc.power, sc.noise_power)[0]
    M, N = link.num_tx, link.num_rx
    rows = [_trace_row(r, 0, 0.0, raa, np.zeros(M), np.zeros(N))]
    shapes = None
    it = 0
    for bound in cfg.stages:
        b = (bound * lam, bound * lam)
        rep = run_bcd(est, b, sc.power, sc.noise_power, base, initial_shapes=shapes, record_shapes=True)
        for c, (z, x) in zip(rep.capacity_trace, rep.shape_trace):
            it += 1
            T = rep.covariance.matrix
            if est is not link:
                c = max(0.0, log2det_capacity(link.channel(z, x), T, sc.noise_power))
            rows.append(_trace_row(r, it, float(bound), float(c), z, x))
        shapes = (rep.zeta.deformations, rep.xi.deformations)
    lam_rows = [dict(row, **{k: row[k] / lam for k in row if k.startswith(("zeta_", "xi_"))}) for row in rows]
    return lam_rows


def _trace_row(r, it, bound, cap, z, x):
    row = {"realization": r, "iteration": it, "stage_bound": bound, "capacity": cap}
    row.update({f"zeta_{m + 1}": float(v) for m, v in enumerate(z)})
    row.update({f"xi_{n + 1}": float(v) for n, v in enumerate(x)})
    return row


def convergence_trace_experiment(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    """Per-iteration capacity and element deformations (in wavelengths)."""
    value = cfg.values[0]
    tasks = [(cfg, value, r) for r in range(cfg.realizations)]
    blocks = _map(_convergence_task, tasks, threads)
    columns = list(blocks[0][0].keys())
    table = ResultTable(dict(_meta(cfg), stages=list(cfg.stages), stage_iterations=cfg.stage_iterations), columns)
    for rows in blocks:
        table.rows.extend(rows)
    return table
