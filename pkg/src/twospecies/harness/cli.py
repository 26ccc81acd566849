"""Command-line entry point.

Exit codes: 0 when the experiment passes, 1 on a tolerance failure, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..kmc import block_field, simulate, sub_seed
from ..lattice import make_geometry
from ..pde import DensityProfile, max_stable_dt, solve, write_metadata
from . import io
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import _initial_sampler, hydro_flux, make_profile, run_experiment

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

SUBCOMMANDS = {
    "simulate": "hydro",
    "pde": "hydro",
    "hydro-compare": "hydro",
    "gap": "gap",
    "diffusion": "diffusion",
    "variance": "variance",
    "green-kubo": "greenkubo",
    "sample": "hydro",
}


def _global_flags(default) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, default=default, help="experiment JSON document")
    p.add_argument("--out", type=Path, default=default, help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, default=default, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, default=default, help="worker threads for ensembles")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twospecies", parents=[_global_flags(None)])
    sub = parser.add_subparsers(dest="command", required=True)
    flags = _global_flags(argparse.SUPPRESS)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[flags])
        if name == "simulate":
            sp.add_argument("--format", choices=["spins", "block"], default="spins")
            sp.add_argument("--member", type=int, default=0, help="ensemble member to run")
        if name == "sample":
            sp.add_argument("--member", type=int, default=0)
        if name == "pde":
            sp.add_argument("--M", type=int, default=None, help="grid nodes per axis (default N)")
    return parser


def _prepare(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    expected = SUBCOMMANDS[args.command]
    if cfg.kind != expected:
        raise ConfigError(f"kind: subcommand {args.command!r} needs kind {expected!r}, got {cfg.kind!r}")
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["output"] = str(args.out)
    return cfg.with_overrides(**over) if over else cfg


def _simulate(cfg: ExperimentConfig, args) -> int:
    h, g = cfg.section("hydro"), cfg.section("geometry")
    geom = make_geometry(g["d"], g["N"], periodic=True)
    times = np.linspace(0.0, float(h["T"]), int(h["snapshots"]))
    seed = sub_seed(cfg.seed, args.member)
    traj = simulate(_initial_sampler(cfg, geom)(seed), cfg.rates, geom, float(h["T"]), times, sub_seed(seed, 1))
    if args.format == "spins":
        io.write_snapshots(cfg.output / "snapshots.csv", times, traj.snapshots)
    else:
        l = h["block_radius"] if h["block_radius"] is not None else geom.N // 4
        fields = np.array([block_field(s, geom, l) for s in traj.snapshots])
        io.write_block_fields(cfg.output / "block_fields.csv", times, fields)
    io.write_json(cfg.output / "run.json", {"events": traj.event_count, "seed": int(seed), "T": h["T"]})
    return EXIT_PASS


def _sample(cfg: ExperimentConfig, args) -> int:
    g = cfg.section("geometry")
    geom = make_geometry(g["d"], g["N"], periodic=True)
    config = _initial_sampler(cfg, geom)(sub_seed(cfg.seed, args.member))
    cfg.output.mkdir(parents=True, exist_ok=True)
    (cfg.output / "initial.txt").write_text(config.to_line() + "\n")
    return EXIT_PASS


def _pde(cfg: ExperimentConfig, args) -> int:
    h, g = cfg.section("hydro"), cfg.section("geometry")
    d, M = g["d"], args.M or g["N"]
    flux = hydro_flux(cfg)
    axes = np.meshgrid(*([np.arange(M) / M] * d), indexing="ij")
    u0 = axes[0]
    p0 = DensityProfile(make_profile(h["initial"])(u0.reshape(-1)).reshape(u0.shape))
    times = np.linspace(0.0, float(h["T"]), int(h["snapshots"]))
    snaps = solve(p0, flux, float(h["T"]), snapshot_times=times)
    io.write_block_fields(cfg.output / "pde_profiles.csv", times, np.array([s.values.reshape(-1) for s in snaps]))
    cfg.output.mkdir(parents=True, exist_ok=True)
    write_metadata(cfg.output / "pde_metadata.json", flux, M, d, max_stable_dt(M, d, flux.lipschitz), float(h["T"]))
    return EXIT_PASS


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads or 1
    try:
        cfg = _prepare(args)
        if args.command == "simulate":
            return _simulate(cfg, args)
        if args.command == "sample":
            return _sample(cfg, args)
        if args.command == "pde":
            return _pde(cfg, args)
        report = run_experiment(cfg, threads=threads, out_dir=cfg.output)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = "PASS" if report.passed else "FAIL"
    print(f"{report.kind}: {status}")
    for k, v in report.summary.items():
        if np.ndim(v) == 0 and not isinstance(v, dict):
            print(f"  {k} = {v}")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
