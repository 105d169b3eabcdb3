"""Experiment configuration: TOML schema, defaults and validation.

All angles in the file are in degrees and all lengths that scale with the
carrier (spacing, morphing range) are in wavelengths; conversion to radians
and metres happens here.

Example::

    [experiment]
    kind = "capacity"            # capacity | eigengains | convergence
    sweep = "morphing_range"     # see SWEEP_VARIABLES
    values = [0.0, 0.1, 0.2, 0.3, 0.5]
    schemes = ["FIM-WPA", "RAA-WPA"]
    realizations = 100
    seed = 1

    [system]
    power_dbm = 10.0

    [array]
    tx_counts = [2, 2]
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from fimmimo.bcd import BcdConfig, Scheme
from fimmimo.errors import ConfigurationError

SWEEP_VARIABLES = (
    "none",
    "antennas",
    "spacing",
    "power_dbm",
    "clusters",
    "paths",
    "spread",
    "paths_spread",
    "morphing_range",
    "gain_mse",
    "angle_rmse",
)
KINDS = ("capacity", "eigengains", "convergence")


@dataclass(frozen=True)
class SystemParams:
    frequency_hz: float = 28e9
    bandwidth_hz: float = 100e6
    noise_dbm: float = -94.0
    power_dbm: float = 10.0
    reference_loss_db: float = -60.0
    reference_distance: float = 1.0
    pathloss_exponent: float = 2.2
    tx_position: tuple = (0.0, 0.0, 10.0)
    rx_position: tuple = (0.0, 100.0, 0.0)
    # azimuth, elevation, spin in degrees
    tx_orientation: tuple = (90.0, 135.0, 0.0)
    rx_orientation: tuple = (90.0, 135.0, 0.0)


@dataclass(frozen=True)
class ArrayParams:
    tx_counts: tuple = (2, 2)
    rx_counts: tuple = (2, 2)
    spacing: float = 0.5
    morphing_range: float = 0.5
    # side of the square aperture used by the spacing sweep, in wavelengths
    aperture: float = 0.5


@dataclass(frozen=True)
class EnvironmentParams:
    clusters: int = 8
    paths_per_cluster: int = 4
    angular_spread_deg: float = 180.0 / 128


@dataclass(frozen=True)
class CsiParams:
    # gain error variance relative to the per-path gain variance beta^2 / (L G)
    gain_mse: float = 0.0
    angle_rmse_deg: float = 0.0


@dataclass(frozen=True)
class OptimizerParams:
    max_outer_iterations: int = 50
    convergence_threshold_db: float = -30.0
    num_random_inits: int | str = "auto"
    inner_max_steps: int = 100
    inner_tol: float = 1e-4


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "capacity"
    sweep: str = "none"
    values: tuple = (0.0,)
    schemes: tuple = ("FIM-WPA", "FIM-EPA", "RAA-WPA", "RAA-EPA")
    realizations: int = 100
    seed: int = 0
    keep_realizations: bool = False
    # convergence experiments: morphing ranges (wavelengths) and iterations per stage
    stages: tuple = (0.1, 0.2, 0.5)
    stage_iterations: int = 25
    system: SystemParams = field(default_factory=SystemParams)
    array: ArrayParams = field(default_factory=ArrayParams)
    environment: EnvironmentParams = field(default_factory=EnvironmentParams)
    csi: CsiParams = field(default_factory=CsiParams)
    optimizer: OptimizerParams = field(default_factory=OptimizerParams)

    def bcd_config(self, seed: int) -> BcdConfig:
        o = self.optimizer
        return BcdConfig(
            max_outer_iterations=o.max_outer_iterations,
            convergence_threshold_db=o.convergence_threshold_db,
            num_random_inits=o.num_random_inits,
            inner_max_steps=o.inner_max_steps,
            inner_tol=o.inner_tol,
            seed=seed,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTIONS = {
    "system": SystemParams,
    "array": ArrayParams,
    "environment": EnvironmentParams,
    "csi": CsiParams,
    "optimizer": OptimizerParams,
}


def _build(cls, data: dict, section: str):
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigurationError("unknown key", f"{section}.{key}")
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    sections = {}
    for name, cls in _SECTIONS.items():
        raw = data.pop(name, {})
        if not isinstance(raw, dict):
            raise ConfigurationError("must be a table", name)
        sections[name] = _build(cls, raw, name)
    top = data.pop("experiment", {})
    if data:
        raise ConfigurationError("unknown section", next(iter(data)))
    if not isinstance(top, dict):
        raise ConfigurationError("must be a table", "experiment")
    exp_fields = {f.name for f in dataclasses.fields(ExperimentConfig)} - set(_SECTIONS)
    for key in top:
        if key not in exp_fields:
            raise ConfigurationError("unknown key", f"experiment.{key}")
    top = {k: tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
           for k, v in top.items()}
    cfg = ExperimentConfig(**top, **sections)
    validate_config(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}", "config")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}", "config") from exc
    return config_from_dict(data)


def _positive(value, name, strict=True):
    ok = value > 0 if strict else value >= 0
    if not (isinstance(value, (int, float)) and math.isfinite(value) and ok):
        raise ConfigurationError(f"must be {'> 0' if strict else '>= 0'}, got {value!r}", name)


def _counts(value, name):
    if len(value) != 2 or any(int(c) != c or c < 1 for c in value):
        raise ConfigurationError("must be two positive integers", name)


def validate_config(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigurationError` naming the first offending field."""
    if cfg.kind not in KINDS:
        raise ConfigurationError(f"must be one of {KINDS}", "experiment.kind")
    if cfg.sweep not in SWEEP_VARIABLES:
        raise ConfigurationError(f"must be one of {SWEEP_VARIABLES}", "experiment.sweep")
    if not isinstance(cfg.realizations, int) or cfg.realizations < 1:
        raise ConfigurationError("must be an integer >= 1", "experiment.realizations")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ConfigurationError("must be an unsigned 64-bit integer", "experiment.seed")
    if len(cfg.values) < 1:
        raise ConfigurationError("needs at least one sweep value", "experiment.values")
    for s in cfg.schemes:
        try:
            Scheme(s)
        except ValueError:
            raise ConfigurationError(f"unknown scheme {s!r}", "experiment.schemes") from None
    if not cfg.schemes:
        raise ConfigurationError("needs at least one scheme", "experiment.schemes")
    for v in cfg.values:
        _check_sweep_value(cfg, v)
    if cfg.kind == "convergence":
        if not cfg.stages:
            raise ConfigurationError("needs at least one stage", "experiment.stages")
        for b in cfg.stages:
            _positive(b, "experiment.stages", strict=False)
        if cfg.stage_iterations < 1:
            raise ConfigurationError("must be >= 1", "experiment.stage_iterations")

    s = cfg.system
    for name in ("frequency_hz", "bandwidth_hz", "reference_distance", "pathloss_exponent"):
        _positive(getattr(s, name), f"system.{name}")
    for name in ("tx_position", "rx_position"):
        if len(getattr(s, name)) != 3:
            raise ConfigurationError("must be a 3-vector", f"system.{name}")
    if math.dist(s.tx_position, s.rx_position) <= 0:
        raise ConfigurationError("transmitter and receiver coincide", "system.rx_position")
    for name in ("tx_orientation", "rx_orientation"):
        ang = getattr(s, name)
        if len(ang) != 3 or not (0 <= ang[0] < 180 and 0 <= ang[1] < 180 and 0 <= ang[2] < 360):
            raise ConfigurationError("need azimuth, elevation in [0, 180) and spin in [0, 360)", f"system.{name}")

    a = cfg.array
    _counts(a.tx_counts, "array.tx_counts")
    _counts(a.rx_counts, "array.rx_counts")
    _positive(a.spacing, "array.spacing")
    _positive(a.aperture, "array.aperture")
    _positive(a.morphing_range, "array.morphing_range", strict=False)

    e = cfg.environment
    if int(e.clusters) < 1:
        raise ConfigurationError("must be >= 1", "environment.clusters")
    if int(e.paths_per_cluster) < 1:
        raise ConfigurationError("must be >= 1", "environment.paths_per_cluster")
    _positive(e.angular_spread_deg, "environment.angular_spread_deg", strict=False)
    _positive(cfg.csi.gain_mse, "csi.gain_mse", strict=False)
    _positive(cfg.csi.angle_rmse_deg, "csi.angle_rmse_deg", strict=False)

    o = cfg.optimizer
    if o.max_outer_iterations < 1:
        raise ConfigurationError("must be >= 1", "optimizer.max_outer_iterations")
    if not math.isfinite(o.convergence_threshold_db):
        raise ConfigurationError("must be finite", "optimizer.convergence_threshold_db")
    if o.num_random_inits != "auto" and (not isinstance(o.num_random_inits, int) or o.num_random_inits < 0):
        raise ConfigurationError("must be 'auto' or an integer >= 0", "optimizer.num_random_inits")
    if o.inner_max_steps < 0:
        raise ConfigurationError("must be >= 0", "optimizer.inner_max_steps")


def _check_sweep_value(cfg, v):
    name = f"experiment.values ({cfg.sweep})"
    sweep = cfg.sweep
    if sweep == "paths_spread":
        if not (isinstance(v, tuple) and len(v) == 2):
            raise ConfigurationError("entries must be [paths, spread_deg] pairs", name)
        if int(v[0]) != v[0] or v[0] < 1:
            raise ConfigurationError(f"paths must be a positive integer, got {v[0]!r}", name)
        _positive(v[1], name, strict=False)
        return
    if isinstance(v, tuple) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigurationError(f"must be a finite number, got {v!r}", name)
    if sweep == "antennas":
        root = math.isqrt(int(v)) if v >= 1 else 0
        if int(v) != v or root * root != v:
            raise ConfigurationError(f"must be a perfect square >= 1, got {v!r}", name)
    elif sweep in ("clusters", "paths"):
        if int(v) != v or v < 1:
            raise ConfigurationError(f"must be an integer >= 1, got {v!r}", name)
    elif sweep == "spacing":
        _positive(v, name)
    elif sweep in ("morphing_range", "gain_mse", "angle_rmse", "spread"):
        _positive(v, name, strict=False)
