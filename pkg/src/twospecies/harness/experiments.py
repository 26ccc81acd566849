"""Experiment pipelines behind the command-line interface."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..diffusion import (
    diffusion_bounds,
    diffusion_table,
    gradient_diffusion,
    green_kubo_matrix,
    variational_diffusion,
)
from ..kmc import EmpiricalField, Trajectory, block_field, simulate_ensemble
from ..lattice import TorusGeometry, make_geometry
from ..measures import deterministic_profile, local_equilibrium
from ..pde import DensityProfile, FluxFunction, interface_positions, make_flux, solve, weak_residual
from ..process import CaseTag, RateSet
from ..spectral import DegenerateSpectrumError, build_generator, current_function, finite_volume_variance, spectral_gap
from . import io
from .config import ExperimentConfig

Profile = Callable[[np.ndarray], np.ndarray]

TEST_FUNCTIONS = {
    "one": (lambda u: np.ones_like(u), lambda u: np.zeros_like(u)),
    "cos": (lambda u: np.cos(2 * np.pi * u), lambda u: -4 * np.pi**2 * np.cos(2 * np.pi * u)),
    "sin": (lambda u: np.sin(2 * np.pi * u), lambda u: -4 * np.pi**2 * np.sin(2 * np.pi * u)),
}


def _first_axis(u: np.ndarray) -> np.ndarray:
    return u if u.ndim == 1 else u[:, 0]


def make_profile(init: dict) -> Profile:
    """Named analytic initial profiles; in ``d > 1`` they vary along the first axis."""
    kind = init["profile"]
    a, c, m = float(init["amplitude"]), float(init["offset"]), int(init["mode"])
    if kind == "cos":
        return lambda u: c + a * np.cos(2 * np.pi * m * _first_axis(u))
    if kind == "sin":
        return lambda u: c + a * np.sin(2 * np.pi * m * _first_axis(u))
    if kind == "step":
        left, right = float(init["left"]), float(init["right"])
        return lambda u: np.where(_first_axis(u) < 0.5, left, right)
    return lambda u: np.full(_first_axis(u).shape, c)


def heat_solution(init: dict, diffusivity: float) -> Callable[[np.ndarray, float], np.ndarray] | None:
    """Exact solution of ``d_t rho = D Laplacian(rho)`` for single-mode profiles."""
    kind = init["profile"]
    if kind not in ("cos", "sin", "constant"):
        return None
    prof = make_profile(init)
    c, m = float(init["offset"]), int(init["mode"])

    def sol(u: np.ndarray, t: float) -> np.ndarray:
        decay = math.exp(-4 * math.pi**2 * m**2 * diffusivity * t)
        return c + (prof(u) - c) * decay

    return sol


def compare_fields(empirical: EmpiricalField | np.ndarray, profile: DensityProfile | np.ndarray) -> float:
    """L1 distance ``M^-d sum |.|`` after averaging the finer field onto the coarser grid."""
    a = np.asarray(empirical.values if isinstance(empirical, EmpiricalField) else empirical, dtype=np.float64)
    b = np.asarray(profile.values if isinstance(profile, DensityProfile) else profile, dtype=np.float64)
    if isinstance(empirical, EmpiricalField):
        a = a.reshape(empirical.geom.shape)
    if a.ndim != b.ndim:
        # a flat field is read as a cubic grid in the dimension of the other one
        d = max(a.ndim, b.ndim)
        flat, other = (a, b) if a.ndim == 1 else (b, a)
        if isinstance(empirical, EmpiricalField) or other.ndim != d:
            raise ValueError(f"fields have different dimensions ({a.ndim} and {b.ndim})")
        side = round(flat.size ** (1 / d))
        if side**d != flat.size:
            raise ValueError(f"a field of {flat.size} values is not a grid in dimension {d}")
        flat = flat.reshape((side,) * d)
        a, b = (flat, other) if a.ndim == 1 else (other, flat)
    na, nb = a.shape[0], b.shape[0]
    fine, coarse = (a, b) if na >= nb else (b, a)
    r = fine.shape[0] // coarse.shape[0]
    if r * coarse.shape[0] != fine.shape[0]:
        raise ValueError(f"grid sizes {na} and {nb} are not nested")
    if r > 1:
        shape = []
        for s in coarse.shape:
            shape += [s, r]
        fine = fine.reshape(shape).mean(axis=tuple(range(1, 2 * coarse.ndim, 2)))
    return float(np.mean(np.abs(fine - coarse)))


@dataclass
class ComparisonReport:
    times: np.ndarray
    errors: np.ndarray  # (members, times) per-run L1 errors
    tolerance: float
    block_radius: int
    ensemble_field_error: np.ndarray  # L1 error of the ensemble-mean field, per time
    extras: dict = field(default_factory=dict)

    @property
    def mean(self) -> np.ndarray:
        return self.errors.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        n = self.errors.shape[0]
        if n < 2:
            return np.zeros(self.errors.shape[1])
        return self.errors.std(axis=0, ddof=1) / math.sqrt(n)

    @property
    def final_error(self) -> float:
        return float(self.mean[-1])

    @property
    def passed(self) -> bool:
        return self.final_error <= self.tolerance

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "final_mean_l1": self.final_error,
            "final_stderr": float(self.stderr[-1]),
            "tolerance": self.tolerance,
            "block_radius": self.block_radius,
            "members": int(self.errors.shape[0]),
            **self.extras,
        }


@dataclass
class ExperimentReport:
    kind: str
    passed: bool
    summary: dict
    header: list[str] = field(default_factory=list)
    rows: list[list] = field(default_factory=list)
    comparison: ComparisonReport | None = None


def _initial_sampler(cfg: ExperimentConfig, geom: TorusGeometry) -> Callable[[int], object]:
    init = cfg.section("hydro")["initial"]
    prof = make_profile(init)
    if init["sampling"] == "deterministic":
        config = deterministic_profile(prof, geom)
        return lambda seed: config
    q = init["hole_fraction"]
    return lambda seed: local_equilibrium(prof, cfg.rates, geom, seed, hole_fraction=q)


def hydro_flux(cfg: ExperimentConfig) -> FluxFunction:
    rates = cfg.rates
    if rates.case is not CaseTag.CASE1:
        return make_flux(rates)
    tab = cfg.section("hydro")["diffusion_table"]
    method = tab["method"]
    if method == "closed_form" and not rates.is_gradient():
        method = "variational"
    grid = np.linspace(-1, 1, int(tab["points"]))
    return make_flux(rates, diffusion_table(rates, grid, method, k=int(tab["k"])))


def reference_profiles(cfg: ExperimentConfig, M: int, times: np.ndarray) -> tuple[list[DensityProfile], dict]:
    """Macroscopic solution at ``times`` on ``M`` nodes per axis, plus diagnostics."""
    h = cfg.section("hydro")
    init = h["initial"]
    d = cfg.section("geometry")["d"]
    flux = hydro_flux(cfg)
    axes = np.meshgrid(*([np.arange(M) / M] * d), indexing="ij")
    u0 = axes[0]
    info: dict = {"flux": flux.label}
    exact = heat_solution(init, cfg.rates.c_exchange) if cfg.rates.case is CaseTag.CASE3 else None
    fine_times = np.union1d(times, np.linspace(0, h["T"], int(h["pde_snapshots"])))
    p0 = DensityProfile(make_profile(init)(u0.reshape(-1)).reshape(u0.shape))
    snaps = solve(p0, flux, float(h["T"]), snapshot_times=fine_times)
    info["weak_residual"] = {
        name: weak_residual(snaps, flux, lambda *ax, f=f: f(ax[0]), lambda *ax, g=g: g(ax[0]))
        for name, (f, g) in TEST_FUNCTIONS.items()
    }
    if d == 1 and init["profile"] == "step":
        pos = []
        for s in snaps:
            cross = interface_positions(s)
            inner = cross[(cross > 0.25) & (cross < 0.75)]
            pos.append(float(inner[0]) if inner.size else float("nan"))
        pos = np.array(pos)
        steps = np.diff(pos)
        info["interface_times"] = fine_times[:: max(1, len(fine_times) // 50)]
        info["interface_positions"] = pos[:: max(1, len(fine_times) // 50)]
        info["interface_monotone"] = bool(np.all(steps >= -1e-12) or np.all(steps <= 1e-12))
    idx = np.searchsorted(fine_times, times)
    chosen = [snaps[i] for i in idx]
    if exact is not None:
        chosen = [DensityProfile(exact(u0, float(t)), float(t)) for t in times]
        info["reference"] = "exact heat solution"
    else:
        info["reference"] = "pde solver"
    return chosen, info


def run_hydro(cfg: ExperimentConfig, threads: int = 1, out_dir: Path | None = None) -> ExperimentReport:
    h = cfg.section("hydro")
    g = cfg.section("geometry")
    geom = make_geometry(g["d"], g["N"], periodic=True)
    l = h["block_radius"] if h["block_radius"] is not None else geom.N // 4
    times = np.linspace(0.0, float(h["T"]), int(h["snapshots"]))
    trajs: list[Trajectory] = simulate_ensemble(
        _initial_sampler(cfg, geom),
        cfg.rates,
        geom,
        float(h["T"]),
        times,
        cfg.seed,
        int(h["ensemble"]),
        threads=threads,
    )
    refs, info = reference_profiles(cfg, geom.N, times)
    ref_fields = [block_field(r.values.reshape(-1), geom, l) for r in refs]
    errors = np.zeros((len(trajs), times.size))
    mean_fields = np.zeros((times.size, geom.n_sites))
    holes = np.zeros((len(trajs), times.size))
    for i, tr in enumerate(trajs):
        for j in range(times.size):
            fld = block_field(tr.snapshots[j], geom, l)
            errors[i, j] = compare_fields(fld, ref_fields[j])
            mean_fields[j] += fld / len(trajs)
            holes[i, j] = np.mean(tr.snapshots[j] == 0)
    ens_err = np.array([compare_fields(mean_fields[j], ref_fields[j]) for j in range(times.size)])
    extras = {
        "case": str(cfg.rates.case),
        "N": geom.N,
        "events": int(sum(t.event_count for t in trajs)),
        "hole_fraction": holes.mean(axis=0),
        "ensemble_field_l1": ens_err,
        **info,
    }
    report = ComparisonReport(times, errors, float(h["tolerance"]), int(l), ens_err, extras)
    rows = [[t, m, s, e] for t, m, s, e in zip(times, report.mean, report.stderr, ens_err)]
    header = ["time", "mean_l1", "stderr", "ensemble_field_l1"]
    if out_dir is not None:
        io.write_rows(out_dir / "hydro_errors.csv", header, rows)
        io.write_block_fields(out_dir / "mean_field.csv", times, mean_fields)
        io.write_block_fields(out_dir / "reference_field.csv", times, np.array(ref_fields))
        io.write_json(out_dir / "report.json", report.summary())
    return ExperimentReport("hydro", report.passed, report.summary(), header, rows, report)


def run_gap(cfg: ExperimentConfig, threads: int = 1, out_dir: Path | None = None) -> ExperimentReport:
    s = cfg.section("gap")
    variant, d = s["variant"], int(s["d"])
    rows = []
    for N in s["N"]:
        geom = make_geometry(d, int(N), periodic=(variant == "torus"))
        for K in s["K"]:
            try:
                gen = build_generator(geom, int(K), cfg.rates, variant)
                gap = spectral_gap(gen)
            except DegenerateSpectrumError:
                continue
            rows.append([d, int(N), int(K), variant, len(gen), gap, gap * int(N) ** 2])
    header = ["d", "N", "K", "variant", "states", "gap", "gap_times_N2"]
    scaled = np.array([r[6] for r in rows])
    gaps = np.array([r[5] for r in rows])
    passed = bool(rows) and bool(np.all(gaps > 0)) and bool(scaled.min() >= s["min_ratio"] * scaled[0])
    summary = {
        "passed": passed,
        "min_gap_times_N2": float(scaled.min()) if rows else None,
        "first_gap_times_N2": float(scaled[0]) if rows else None,
        "min_ratio": s["min_ratio"],
    }
    if out_dir is not None:
        io.write_rows(out_dir / "gap_sweep.csv", header, rows)
        io.write_json(out_dir / "report.json", summary)
    return ExperimentReport("gap", passed, summary, header, rows)


def run_diffusion(cfg: ExperimentConfig, threads: int = 1, out_dir: Path | None = None) -> ExperimentReport:
    s = cfg.section("diffusion")
    rho = np.asarray(s["rho"], dtype=np.float64) if "rho" in s else np.linspace(-1, 1, int(s["points"]))
    ks = sorted(int(k) for k in s["k"])
    rows = []
    ok = True
    gradient = cfg.rates.is_gradient()
    for r in rho:
        lo, hi = diffusion_bounds(float(r), cfg.rates)
        vals = [variational_diffusion(float(r), cfg.rates, k) for k in ks]
        ok &= all(b <= a + 1e-10 for a, b in zip(vals, vals[1:]))
        ok &= all(lo - 1e-10 <= v <= hi + 1e-10 for v in vals)
        closed = float(gradient_diffusion(float(r), cfg.rates)) if gradient else float("nan")
        for k, v in zip(ks, vals):
            rows.append([r, v, lo, hi, "variational", k, "", closed])
    header = ["rho", "d", "lower", "upper", "method", "k_or_N", "lambda", "closed_form"]
    summary = {"passed": bool(ok), "gradient": gradient, "k": ks, "points": int(rho.size)}
    if out_dir is not None:
        io.write_rows(out_dir / "diffusion_table.csv", header, rows)
        io.write_json(out_dir / "report.json", summary)
    return ExperimentReport("diffusion", bool(ok), summary, header, rows)


def run_variance(cfg: ExperimentConfig, threads: int = 1, out_dir: Path | None = None) -> ExperimentReport:
    s = cfg.section("variance")
    psi = current_function(cfg.rates, d=1)
    rows = []
    for l in s["l"]:
        for K in s["K"]:
            v = finite_volume_variance(psi, int(l), int(K), cfg.rates)
            rows.append([int(l), int(K), K / (2 * int(l) + 1), v])
    header = ["l", "K", "density", "variance"]
    passed = all(np.isfinite(r[3]) and r[3] >= -1e-12 for r in rows)
    summary = {"passed": bool(passed), "psi": s["psi"]}
    if out_dir is not None:
        io.write_rows(out_dir / "variance.csv", header, rows)
        io.write_json(out_dir / "report.json", summary)
    return ExperimentReport("variance", bool(passed), summary, header, rows)


def run_greenkubo(cfg: ExperimentConfig, threads: int = 1, out_dir: Path | None = None) -> ExperimentReport:
    s = cfg.section("greenkubo")
    g = cfg.section("geometry")
    geom = make_geometry(g["d"], g["N"], periodic=True)
    res = green_kubo_matrix(float(s["rho"]), cfg.rates, geom, s["lambdas"])
    D = res.matrix
    off = D - np.diag(np.diag(D))
    raw_off = np.max(np.abs(res.raw - np.einsum("nii->ni", res.raw)[:, :, None] * np.eye(geom.d)))
    passed = bool(res.converged and np.abs(off).max() <= s["tolerance"] and raw_off <= s["tolerance"])
    rows = [[lam, i + 1, j + 1, res.raw[n, i, j]] for n, lam in enumerate(res.lambdas)
            for i in range(geom.d) for j in range(geom.d)]
    rows += [[0.0, i + 1, j + 1, D[i, j]] for i in range(geom.d) for j in range(geom.d)]
    header = ["lambda", "i", "j", "D_ij"]
    summary = {
        "passed": passed,
        "converged": res.converged,
        "max_offdiagonal": float(max(np.abs(off).max(), raw_off)),
        "diagonal": np.diag(D),
    }
    if cfg.rates.is_gradient():
        summary["closed_form"] = float(gradient_diffusion(float(s["rho"]), cfg.rates))
    if out_dir is not None:
        io.write_rows(out_dir / "green_kubo.csv", header, rows)
        io.write_json(out_dir / "report.json", summary)
    return ExperimentReport("greenkubo", passed, summary, header, rows)


RUNNERS = {
    "hydro": run_hydro,
    "gap": run_gap,
    "diffusion": run_diffusion,
    "variance": run_variance,
    "greenkubo": run_greenkubo,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1, out_dir: Path | str | None = None) -> ExperimentReport:
    out = Path(out_dir) if out_dir is not None else None
    return RUNNERS[cfg.kind](cfg, threads=threads, out_dir=out)


__all__ = [
    "ComparisonReport",
    "ExperimentReport",
    "compare_fields",
    "make_profile",
    "run_experiment",
]
