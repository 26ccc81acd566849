"""Estimators of the diffusion coefficient ``d(rho)``.

``d(rho) * chi(rho)`` is the infimum over local functions ``g`` of the bond
Dirichlet form ``E[c_b (pi_b (eta(0) + Gamma_g))^2]`` under the product
measure, where ``Gamma_g`` sums the translates of ``g``.  Besides the closed
form for gradient rates this module provides

* the infimum restricted to ``g`` supported on ``2k + 1`` sites (d = 1),
  computed exactly by enumerating the finite window the objective sees;
* a Green-Kubo estimate from resolvents of the torus generator;
* two-sided bounds that depend only on the single-bond marginal.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import linalg, sparse
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import splu

from .lattice import TorusGeometry, bond_arrays
from .measures import compressibility, marginals, phi, phi_prime
from .process import MOVE_X, MOVE_Y, CaseTag, RateSet, current_table, rate_table
from .spectral.generator import assemble

# change of eta(0) under each active pair (a, b) -> move, indexed by (a+1, b+1)
_DELTA0 = (MOVE_X.astype(np.int64) - np.arange(-1, 2)[:, None]).astype(np.float64)


def _require_case1(rates: RateSet) -> None:
    if rates.case is not CaseTag.CASE1:
        raise ValueError(f"the diffusion coefficient estimators need Case 1 rates, got {rates.case}")


def gradient_diffusion(rho, rates: RateSet):
    """``d(rho) = -Phi'(rho) (C+ - C-)/2 + (C+ + C-)/2`` for gradient rates."""
    _require_case1(rates)
    if not rates.is_gradient():
        raise ValueError(f"rates {rates.as_tuple()} are not gradient")
    return -phi_prime(rho, rates) * (rates.c_plus - rates.c_minus) / 2 + (rates.c_plus + rates.c_minus) / 2


def gradient_dtilde(rho, rates: RateSet):
    """Antiderivative of the gradient-case ``d`` vanishing at ``rho = -1``."""
    _require_case1(rates)
    if not rates.is_gradient():
        raise ValueError(f"rates {rates.as_tuple()} are not gradient")
    r = np.asarray(rho, dtype=np.float64)
    return -(rates.c_plus - rates.c_minus) * phi(r, rates) / 2 + (rates.c_plus + rates.c_minus) * (r + 1) / 2


def boundary_limit(rho: float, rates: RateSet) -> float:
    """Limits of ``d`` at full charge: ``C+`` at ``rho = 1`` and ``C-`` at ``rho = -1``."""
    if rho >= 1:
        return rates.c_plus
    if rho <= -1:
        return rates.c_minus
    raise ValueError("boundary limit requested at an interior density")


def bond_dirichlet(rho: float, rates: RateSet) -> float:
    """``E[c_b (pi_b eta(0))^2]`` under the product measure."""
    p = marginals(rho, rates).as_array()
    table = rate_table(rates)
    return float(p @ (table * _DELTA0**2) @ p)


def _interior(rho: float) -> bool:
    return -1 < rho < 1


def diffusion_bounds(rho: float, rates: RateSet) -> tuple[float, float]:
    """Lower and upper bounds on ``d(rho)`` from the single-bond marginal.

    The upper bound is the value at ``g = 0``.  The lower bound comes from
    the dual of the variational problem with flows carried by the bond pair
    ``(eta(0), eta(e))`` only; it is exact in the gradient case.
    """
    _require_case1(rates)
    if not _interior(rho):
        lim = boundary_limit(rho, rates)
        return lim, lim
    chi = compressibility(rho, rates)
    upper = bond_dirichlet(rho, rates) / chi
    m = marginals(rho, rates)
    pp, p0, pm = m.p_plus, m.p_zero, m.p_minus
    S = rates.c_annihilate + 2 * rates.c_exchange
    u = -np.array([p0 + 2 * pm, p0 + 2 * pp]) / p0
    v = np.array([pm, pp]) / p0
    # u^T M^{-1} u for M = diag(1/a) + v v^T / s, by Sherman-Morrison (M is
    # badly scaled near rho = +-1, the inverse is not)
    a = np.array([pp * p0 * rates.c_plus, p0 * pm * rates.c_minus])
    s = pp * pm * S / 2
    au, av = a * u, a * v
    lower = float(u @ au - (v @ au) ** 2 / (s + v @ av)) / chi
    return min(lower, upper), upper


def _window_configs(n_sites: int, start: int, stop: int) -> np.ndarray:
    """Rows ``start:stop`` of the lexicographic list of ``{-1,0,1}^n_sites``."""
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((idx.size, n_sites), dtype=np.int8)
    for j in range(n_sites - 1, -1, -1):
        out[:, j] = idx % 3 - 1
        idx //= 3
    return out


def variational_diffusion(rho: float, rates: RateSet, k: int, chunk: int = 200_000) -> float:
    """Upper estimate of ``d(rho)`` with ``g`` ranging over functions of ``2k+1`` spins (d = 1).

    ``k = 0`` means ``g = 0``.  The minimiser is found from the normal
    equations (minimum-norm solution, since ``g`` is only defined up to
    functions with vanishing ``Gamma_g`` gradient).
    """
    _require_case1(rates)
    if not _interior(rho):
        return boundary_limit(rho, rates)
    if k < 0:
        raise ValueError("k must be nonnegative")
    chi = compressibility(rho, rates)
    if k == 0:
        return bond_dirichlet(rho, rates) / chi
    span = 2 * k + 1
    width = 2 * span  # sites -2k .. 2k+1; the bond sits at window positions (2k, 2k+1)
    bx, by = 2 * k, 2 * k + 1
    p = marginals(rho, rates).as_array()
    table = rate_table(rates)
    mx = MOVE_X.astype(np.int64)
    my = MOVE_Y.astype(np.int64)
    powers = 3 ** np.arange(span - 1, -1, -1, dtype=np.int64)
    dim = 3**span
    normal = np.zeros((dim, dim))
    rhs = np.zeros(dim)
    yy = 0.0
    total = 3**width
    for start in range(0, total, chunk):
        conf = _window_configs(width, start, min(start + chunk, total))
        a = conf[:, bx].astype(np.int64) + 1
        b = conf[:, by].astype(np.int64) + 1
        rate = table[a, b]
        active = rate > 0
        if not active.any():
            continue
        conf, a, b, rate = conf[active], a[active], b[active], rate[active]
        prob = np.prod(p[conf.astype(np.int64) + 1], axis=1)
        wgt = prob * rate
        moved = conf.copy()
        moved[:, bx] = mx[a, b]
        moved[:, by] = my[a, b]
        y = _DELTA0[a, b]
        rows, cols, vals = [], [], []
        n = conf.shape[0]
        ar = np.arange(n)
        for x in range(0, span + 1):  # translates whose support meets the bond
            sl = slice(x, x + span)
            after = (moved[:, sl].astype(np.int64) + 1) @ powers
            before = (conf[:, sl].astype(np.int64) + 1) @ powers
            rows += [ar, ar]
            cols += [after, before]
            vals += [np.ones(n), -np.ones(n)]
        A = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, dim)
        )
        Aw = A.multiply(wgt[:, None]).tocsr()
        normal += (A.T @ Aw).toarray()
        rhs += Aw.T @ y
        yy += float(wgt @ y**2)
    coef, *_ = linalg.lstsq(normal, -rhs, cond=1e-12, lapack_driver="gelsy")
    value = yy + float(rhs @ coef)
    return max(value, 0.0) / chi


def _all_states(n_sites: int) -> np.ndarray:
    return _window_configs(n_sites, 0, 3**n_sites)


@dataclass(frozen=True)
class GreenKuboResult:
    matrix: np.ndarray  # Richardson-extrapolated estimate
    lambdas: np.ndarray
    raw: np.ndarray  # (n_lambda, d, d) values at each lambda
    converged: bool


def green_kubo_matrix(
    rho: float,
    rates: RateSet,
    geom: TorusGeometry,
    lambdas: Sequence[float] = (0.5, 0.25, 0.125, 0.0625),
    tol: float = 1e-2,
) -> GreenKuboResult:
    """Resolvent estimate of the diffusion matrix on a small torus.

    For each ``lambda`` the equation ``(lambda - L) G_j = W_j`` is solved on
    the full configuration space with the product weights, ``W_j`` being the
    total current through the bonds along axis ``j``; then

        D_ij(lambda) = (delta_ij E[c_b (pi_b eta(0))^2] - N^-d <W_i, G_j>) / chi.

    The last two values of the sequence are extrapolated linearly to
    ``lambda = 0``.  ``converged`` is false when the extrapolation moves the
    estimate by more than ``tol`` relative to the last raw value.
    """
    _require_case1(rates)
    if not geom.periodic:
        raise ValueError("Green-Kubo estimates live on the torus")
    if not _interior(rho):
        raise ValueError("density must lie strictly inside (-1, 1)")
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.size < 2 or np.any(np.diff(lambdas) >= 0) or np.any(lambdas <= 0):
        raise ValueError("lambda sequence must be positive and strictly decreasing, with at least two entries")
    V, d = geom.n_sites, geom.d
    if 3**V > 2_000_000:
        raise ValueError(f"configuration space 3^{V} is too large")
    states = _all_states(V)
    codes = np.arange(3**V, dtype=np.int64)
    xs, ys, mult = bond_arrays(geom)
    Q = assemble(states, codes, xs, ys, mult.astype(np.float64), rates)
    p = marginals(rho, rates).as_array()
    w = np.prod(p[states.astype(np.int64) + 1], axis=1)
    r = np.sqrt(w)
    S = sparse.diags(r) @ Q @ sparse.diags(1 / r)
    S = ((S + S.T) * 0.5).tocsc()
    wt = current_table(rates)
    currents = np.zeros((d, 3**V))
    for j in range(d):
        for x in range(V):
            y = geom.shift(x, j + 1, 1)
            currents[j] += wt[states[:, x] + 1, states[:, y] + 1]
    B = currents * r  # symmetrised right-hand sides
    base = bond_dirichlet(rho, rates)
    chi = compressibility(rho, rates)
    raw = np.zeros((lambdas.size, d, d))
    eye = sparse.identity(3**V, format="csc")
    for n, lam in enumerate(lambdas):
        lu = splu((lam * eye - S).tocsc())
        Z = np.column_stack([lu.solve(B[j]) for j in range(d)])
        corr = B @ Z / V
        raw[n] = (base * np.eye(d) - 0.5 * (corr + corr.T)) / chi
    l1, l2 = lambdas[-2], lambdas[-1]
    extrap = (l1 * raw[-1] - l2 * raw[-2]) / (l1 - l2)
    scale = max(1.0, float(np.abs(raw[-1]).max()))
    converged = bool(np.abs(extrap - raw[-1]).max() <= tol * scale)
    if not converged:
        warnings.warn("Green-Kubo extrapolation in lambda has not settled", RuntimeWarning, stacklevel=2)
    return GreenKuboResult(extrap, lambdas, raw, converged)


METHODS = ("closed_form", "variational", "green_kubo")


@dataclass(frozen=True, eq=False)
class DiffusionTable:
    rho: np.ndarray
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    method: str
    k_or_N: int | None = None
    lam: float | None = None
    integrated: bool = False

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        if rho.ndim != 1 or rho.size < 2 or np.any(np.diff(rho) <= 0):
            raise ValueError("density grid must be strictly increasing with at least two points")
        if np.any(np.abs(rho) > 1):
            raise ValueError("density grid must lie in [-1, 1]")
        for name in ("rho", "values", "lower", "upper"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != rho.shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {rho.shape}")
            object.__setattr__(self, name, arr)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["rho", "d", "lower", "upper", "method", "k_or_N", "lambda"])
            for row in zip(self.rho, self.values, self.lower, self.upper):
                wr.writerow(
                    [f"{row[0]:.10g}", f"{row[1]:.12g}", f"{row[2]:.12g}", f"{row[3]:.12g}", self.method,
                     "" if self.k_or_N is None else self.k_or_N, "" if self.lam is None else self.lam]
                )


def diffusion_table(
    rates: RateSet,
    rho: Sequence[float],
    method: str = "closed_form",
    k: int = 1,
    geom: TorusGeometry | None = None,
    lambdas: Sequence[float] = (0.5, 0.25, 0.125, 0.0625),
) -> DiffusionTable:
    """Tabulate ``d`` on a grid; ``rho = +-1`` use the boundary limits."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    rho = np.asarray(rho, dtype=np.float64)
    vals, lo, hi = np.zeros_like(rho), np.zeros_like(rho), np.zeros_like(rho)
    for i, r in enumerate(rho):
        lo[i], hi[i] = diffusion_bounds(r, rates)
        if not _interior(r):
            vals[i] = boundary_limit(r, rates)
        elif method == "closed_form":
            vals[i] = gradient_diffusion(r, rates)
        elif method == "variational":
            vals[i] = variational_diffusion(r, rates, k)
        else:
            if geom is None:
                raise ValueError("Green-Kubo tables need a torus geometry")
            vals[i] = green_kubo_matrix(r, rates, geom, lambdas).matrix[0, 0]
    k_or_n = k if method == "variational" else (geom.N if method == "green_kubo" else None)
    lam = float(lambdas[-1]) if method == "green_kubo" else None
    return DiffusionTable(rho, vals, lo, hi, method, k_or_n, lam)


def integrate_dtilde(table: DiffusionTable) -> DiffusionTable:
    """Cumulative trapezoidal integral of ``d`` from ``rho = -1``."""
    if table.integrated:
        raise ValueError("table is already integrated")
    if table.rho[0] != -1.0:
        raise ValueError("the grid must start at rho = -1")
    if np.any(table.values <= 0):
        raise ValueError("diffusion coefficient must be positive")
    acc = cumulative_trapezoid(table.values, table.rho, initial=0.0)
    return replace(table, values=acc, integrated=True)
