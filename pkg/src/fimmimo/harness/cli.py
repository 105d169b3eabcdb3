"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical check failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from fimmimo.bcd import Scheme, run_scheme
from fimmimo.channel import link_model, sample_environment
from fimmimo.errors import ConfigurationError
from fimmimo.harness.config import ExperimentConfig, load_config, validate_config
from fimmimo.harness.experiment import derive_seed, resolve_scenario, resolve_threads, run_experiment
from fimmimo.harness.gradcheck import GRAD_TOL, run_gradcheck

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment TOML file")
    common.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, help="write results here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--realizations", type=int)
    common.add_argument("--threads", help="worker processes (default: $FIM_MIMO_THREADS or 1)")

    p = argparse.ArgumentParser(prog="fim-mimo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run an experiment config")
    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    g.add_argument("--instances", type=int, default=50)
    sub.add_parser("demo", parents=[common], help="one realisation, all four schemes")
    sub.add_parser("validate", parents=[common], help="lint a config file")
    return p


def _config(args, required: bool) -> ExperimentConfig:
    if args.config is None:
        if required:
            raise ConfigurationError("--config is required", "config")
        cfg = ExperimentConfig()
    else:
        cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.realizations is not None:
        overrides["realizations"] = args.realizations
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
        validate_config(cfg)
    return cfg


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_run(args) -> int:
    cfg = _config(args, required=True)
    table = run_experiment(cfg, threads=resolve_threads(args.threads))
    _emit(table.render(args.format), args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    err = run_gradcheck(seed, args.instances)
    print(f"max_rel_err={err:.3e}")
    return EXIT_OK if err < GRAD_TOL else EXIT_NUMERIC


def cmd_demo(args) -> int:
    cfg = _config(args, required=False)
    value = cfg.values[0] if cfg.sweep != "none" else None
    sc = resolve_scenario(cfg, value)
    seed = derive_seed(cfg.seed, 0)
    link = link_model(sample_environment(sc.environment, derive_seed(seed, 0)), sc.tx_geom, sc.rx_geom)
    bcd_cfg = cfg.bcd_config(derive_seed(seed, 1))
    caps = {}
    for scheme in Scheme:
        caps[scheme] = run_scheme(scheme, link, sc.bounds, sc.power, sc.noise_power, bcd_cfg)[0]
    lam = sc.wavelength
    print(f"M={link.num_tx} N={link.num_rx} L={sc.environment.num_clusters} G={sc.environment.paths_per_cluster} "
          f"morphing_range={sc.bounds[0] / lam:.3g} lambda  P_t={sc.power:.3g} W  seed={cfg.seed}")
    for scheme, c in caps.items():
        print(f"{scheme.value:8s} {c:10.4f} bps/Hz")
    ok = caps[Scheme.FIM_WPA] >= caps[Scheme.RAA_WPA] - 1e-9
    gain = caps[Scheme.FIM_WPA] / caps[Scheme.RAA_WPA] - 1 if caps[Scheme.RAA_WPA] > 0 else float("nan")
    print(f"FIM-WPA >= RAA-WPA: {'OK' if ok else 'FAILED'} (gain {100 * gain:+.1f}%)")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_validate(args) -> int:
    cfg = _config(args, required=True)
    print(f"OK {args.config} kind={cfg.kind} sweep={cfg.sweep} values={len(cfg.values)} "
          f"realizations={cfg.realizations} hash={cfg.config_hash()}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "gradcheck": cmd_gradcheck, "demo": cmd_demo, "validate": cmd_validate}


def cli_main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
