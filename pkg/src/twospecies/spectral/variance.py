"""Finite-volume central-limit variances.

For a local function ``psi`` and the cube ``Lambda_l = {-l, ..., l}^d`` the
variance is ``(2l)^{-d} <(-L)^{-1} v, v>`` with ``v`` the sum of the
translates of ``psi`` that fit in the cube and ``L`` the free-boundary
generator of the cube on the hyperplane of charge ``K``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from ..lattice import TorusGeometry, make_geometry
from ..measures import canonical_enumerate
from ..process import RateSet, current_table
from .generator import DENSE_LIMIT, GeneratorMatrix, build_generator


@dataclass(frozen=True)
class LocalFunction:
    """``psi(eta) = func(eta(x_1), ..., eta(x_k))`` for the listed offsets ``x_j``.

    ``func`` is vectorised: it receives an ``(n, k)`` spin array and returns
    ``n`` values.
    """

    offsets: tuple[tuple[int, ...], ...]
    func: Callable[[np.ndarray], np.ndarray]

    @property
    def d(self) -> int:
        return len(self.offsets[0])

    def __call__(self, spins: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(np.asarray(spins)), dtype=np.float64)


class NotMeanZeroError(ValueError):
    pass


def check_mean_zero(psi: LocalFunction, rates: RateSet, tol: float = 1e-10) -> None:
    """Raise unless ``psi`` has mean zero under every canonical measure on its support."""
    k = len(psi.offsets)
    for K in range(-k, k + 1):
        try:
            ens = canonical_enumerate(k, K, rates)
        except ValueError:
            continue  # charge K carries no weight on this support
        mean = float(ens.weights @ psi(ens.states))
        if abs(mean) > tol:
            raise NotMeanZeroError(f"local function has canonical mean {mean:.3e} at charge {K}")


def cube_geometry(d: int, l: int) -> TorusGeometry:
    return make_geometry(d, 2 * l + 1, periodic=False)


def translate_sum(psi: LocalFunction, gen: GeneratorMatrix, l: int) -> np.ndarray:
    """``sum_x tau_x psi`` over the shifts keeping the support inside the cube."""
    geom = gen.geom
    offs = np.array(psi.offsets)
    total = np.zeros(len(gen))
    for x in itertools.product(range(-l, l + 1), repeat=geom.d):
        pts = offs + np.array(x)
        if np.any(np.abs(pts) > l):
            continue
        sites = [geom.site(tuple(p + l)) for p in pts]
        total += psi(gen.states[:, sites])
    return total


def inverse_generator_form(gen: GeneratorMatrix, v: np.ndarray) -> float:
    """``<(-Q)^{-1} v, v>_w`` for ``v`` with ``<v>_w = 0``."""
    w = gen.weights
    if abs(w @ v) > 1e-10 * max(1.0, np.abs(v).max()):
        raise NotMeanZeroError("right-hand side is not centred; the system is inconsistent")
    if len(gen) == 1:
        return 0.0
    r = np.sqrt(w)
    S = -gen.symmetrized()
    b = r * v
    n = len(gen)
    # the rank-one term removes the constant kernel without changing the solution
    if n <= DENSE_LIMIT:
        z = np.linalg.solve(S.toarray() + np.outer(r, r), b)
    else:
        op = LinearOperator((n, n), matvec=lambda y: S @ y + r * (r @ y), dtype=np.float64)
        z, info = cg(op, b, rtol=1e-12, maxiter=20 * n)
        if info != 0:
            raise RuntimeError(f"conjugate gradient did not converge (info={info})")
    return float(z @ b)


def finite_volume_variance(
    psi: LocalFunction,
    l: int,
    K: int,
    rates: RateSet,
    check: bool = True,
) -> float:
    if check:
        check_mean_zero(psi, rates)
    d = psi.d
    if (2 * l + 1) ** d > 14:
        raise ValueError(f"cube of radius {l} in dimension {d} is too large to enumerate")
    gen = build_generator(cube_geometry(d, l), K, rates, "full")
    v = translate_sum(psi, gen, l)
    return inverse_generator_form(gen, v) / (2 * l) ** d


def current_function(rates: RateSet, d: int = 1, axis: int = 1) -> LocalFunction:
    """The instantaneous current across the bond ``(0, e_axis)`` as a local function."""
    table = current_table(rates)
    e = tuple(int(i == axis - 1) for i in range(d))
    origin = (0,) * d
    return LocalFunction((origin, e), lambda s: table[s[:, 0] + 1, s[:, 1] + 1])


def as_local(values: Sequence[float], offsets) -> LocalFunction:
    """Local function given by a table over ``{-1,0,1}^k`` in lexicographic order."""
    vals = np.asarray(values, dtype=np.float64)
    k = len(offsets)
    if vals.size != 3**k:
        raise ValueError(f"expected {3**k} values")
    powers = 3 ** np.arange(k - 1, -1, -1)
    return LocalFunction(tuple(map(tuple, offsets)), lambda s: vals[(s.astype(np.int64) + 1) @ powers])


__all__ = [
    "LocalFunction",
    "NotMeanZeroError",
    "as_local",
    "check_mean_zero",
    "current_function",
    "finite_volume_variance",
    "inverse_generator_form",
]
