"""Reduction of the mean-field tilde dynamics to a birth-death chain.

Under the mean-field tilde generator with charge ``K >= 0`` on ``V`` sites,
the number ``X`` of negative particles is itself Markov: a +/- pair
annihilates at rate ``l (K + l) / V`` and two holes create a pair at rate
``m (m - 1) beta / V`` where ``m = V - K - 2l`` is the number of holes.
Exchanges leave ``X`` unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.optimize import brentq
from scipy.sparse.linalg import eigsh
from scipy.special import gammaln

from ..lattice import TorusGeometry
from ..process import RateSet
from .generator import DegenerateSpectrumError, GeneratorMatrix, build_generator


@dataclass(frozen=True, eq=False)
class BirthDeathChain:
    volume: int
    K: int
    beta: float
    down: np.ndarray  # r(l, l-1), l = 0..lmax
    up: np.ndarray  # r(l, l+1)
    weights: np.ndarray  # stationary law of X

    @property
    def lmax(self) -> int:
        return self.down.size - 1

    @property
    def states(self) -> np.ndarray:
        return np.arange(self.down.size)

    def generator(self) -> np.ndarray:
        n = self.down.size
        Q = np.diag(self.up[:-1], 1) + np.diag(self.down[1:], -1)
        Q -= np.diag(Q.sum(axis=1))
        return Q.reshape(n, n)

    def drift(self, x):
        """Mean drift ``D(x) = r(x, x+1) - r(x, x-1)`` extended to real ``x``."""
        x = np.asarray(x, dtype=np.float64)
        m = self.volume - self.K - 2 * x
        return (self.beta * m * (m - 1) - x * (self.K + x)) / self.volume

    def drift_slope(self, x):
        x = np.asarray(x, dtype=np.float64)
        m = self.volume - self.K - 2 * x
        return (-2 * self.beta * (2 * m - 1) - self.K - 2 * x) / self.volume


def birth_death_chain(volume: int, K: int, beta: float) -> BirthDeathChain:
    if K < 0:
        raise ValueError("K must be nonnegative; apply the +/- duality first")
    if K > volume:
        raise ValueError(f"K = {K} exceeds the volume {volume}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    lmax = (volume - K) // 2
    l = np.arange(lmax + 1, dtype=np.float64)
    m = volume - K - 2 * l
    down = l * (K + l) / volume
    up = m * (m - 1) * beta / volume
    up[-1] = max(up[-1], 0.0)
    # multinomial count of configurations with l negatives, times beta**l
    with np.errstate(divide="ignore"):
        logw = gammaln(volume + 1) - gammaln(K + l + 1) - gammaln(l + 1) - gammaln(m + 1) + l * np.log(beta)
    if beta == 0:
        logw = np.where(l == 0, logw[0], -np.inf)
    w = np.exp(logw - logw.max())
    return BirthDeathChain(volume, K, float(beta), down, up, w / w.sum())


def chain_gap(chain: BirthDeathChain) -> float:
    if chain.down.size < 2:
        raise DegenerateSpectrumError("single-state chain has no gap")
    r = np.sqrt(chain.weights)
    S = (r[:, None] * chain.generator()) / r[None, :]
    S = 0.5 * (S + S.T)
    return float(eigh(-S, eigvals_only=True, subset_by_index=[1, 1])[0])


def slope_constant(volume: int, beta: float) -> float:
    """Lower bound on ``-D'`` valid on the whole range of the chain."""
    if beta >= 0.25:
        return (volume - 2 * beta) / volume
    return 2 * beta * (2 * volume - 1) / volume


class DriftConditionError(RuntimeError):
    pass


@dataclass(frozen=True)
class RamificationResult:
    e0: int
    C0: float  # smallest constant satisfying the path condition
    C0_slope: float  # 2 / slope_constant, the a priori constant
    poincare_constant: float  # 2 * C0
    exact_gap: float
    drift_at_0: float
    drift_at_lmax: float
    min_slope: float

    @property
    def certified(self) -> bool:
        return self.exact_gap >= 1.0 / self.poincare_constant - 1e-12


def ramification_gap_bound(chain: BirthDeathChain) -> RamificationResult:
    """Poincare constant from the paths rooted at the zero of the drift.

    Every state ``x != e0`` must satisfy
    ``|x - e0| <= C0 * (r(x, parent) - r(x, child))``; the smallest such
    ``C0`` is returned together with the exact gap of the chain.
    """
    lmax = chain.lmax
    if lmax < 1:
        raise DegenerateSpectrumError("single-state chain has no Poincare constant")
    d0, d1 = float(chain.drift(0.0)), float(chain.drift(float(lmax)))
    if d0 < -1e-12 or d1 > 1e-12:
        raise DriftConditionError(f"drift does not change sign: D(0)={d0}, D(lmax)={d1}")
    if d0 <= 0:
        root = 0.0
    elif d1 >= 0:
        root = float(lmax)
    else:
        root = brentq(chain.drift, 0.0, float(lmax), xtol=1e-14)
    e0 = int(np.floor(root + 0.5))
    x = np.arange(lmax + 1)
    drift = chain.up - chain.down
    margin = np.where(x < e0, drift, -drift)
    off = x != e0
    if np.any(margin[off] <= 0):
        bad = x[off][margin[off] <= 0]
        raise DriftConditionError(f"drift points away from e0={e0} at states {bad.tolist()}")
    C0 = float(np.max(np.abs(x[off] - e0) / margin[off]))
    # D' is affine, so its extremes sit at the endpoints
    min_slope = float(min(-chain.drift_slope(0.0), -chain.drift_slope(float(lmax))))
    c_slope = slope_constant(chain.volume, chain.beta)
    if min_slope < c_slope - 1e-12:
        raise DriftConditionError(f"-D' = {min_slope} falls below {c_slope}")
    return RamificationResult(
        e0=e0,
        C0=C0,
        C0_slope=2.0 / c_slope,
        poincare_constant=2.0 * C0,
        exact_gap=chain_gap(chain),
        drift_at_0=d0,
        drift_at_lmax=d1,
        min_slope=min_slope,
    )


def negatives_count(gen: GeneratorMatrix) -> np.ndarray:
    """``X(eta)``: the number of negative particles in each state."""
    return (gen.states == -1).sum(axis=1)


def projection_identity_check(geom: TorusGeometry, K: int, rates: RateSet) -> float:
    """``max |L~m f - (chain generator) f~ o X|`` over indicators of ``{X = l}``.

    Also asserts the pushforward of the canonical weights under ``X`` equals
    the chain's stationary law (to 1e-12).
    """
    gen = build_generator(geom, K, rates, "meanfield")
    chain = birth_death_chain(geom.n_sites, K, rates.beta())
    X = negatives_count(gen)
    Qc = chain.generator()
    err = 0.0
    for l in range(chain.lmax + 1):
        f_tilde = (np.arange(chain.lmax + 1) == l).astype(np.float64)
        lhs = gen.Q @ f_tilde[X]
        rhs = (Qc @ f_tilde)[X]
        err = max(err, float(np.max(np.abs(lhs - rhs))))
    push = np.bincount(X, weights=gen.weights, minlength=chain.lmax + 1)
    if np.max(np.abs(push - chain.weights)) > 1e-12:
        raise AssertionError("canonical weights do not project onto the chain's stationary law")
    return err


def _multiset_permutations(colors: list[int]) -> np.ndarray:
    """Distinct orderings of ``colors`` in lexicographic order."""
    counts = np.bincount(colors)
    res: list[list[int]] = []

    def rec(prefix: list[int]) -> None:
        if len(prefix) == len(colors):
            res.append(prefix.copy())
            return
        for c in range(counts.size):
            if counts[c]:
                counts[c] -= 1
                prefix.append(c)
                rec(prefix)
                prefix.pop()
                counts[c] += 1

    rec([])
    return np.array(res, dtype=np.int8)


def multispecies_meanfield_gap(sites: int, counts, cap: int = 200_000) -> float:
    """Gap of the mean-field colour exchange ``N^{-1} sum_{j,k} (f(eta^{jk}) - f(eta))``.

    ``counts[i]`` particles carry colour ``i + 1``; the remaining sites are
    empty (colour 0).  The invariant measure is uniform.
    """
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts) or sum(counts) > sites:
        raise ValueError("colour counts must be nonnegative and fit into the sites")
    full = [sites - sum(counts)] + counts
    n_states = int(round(np.exp(gammaln(sites + 1) - sum(gammaln(c + 1) for c in full))))
    if n_states > cap:
        raise ValueError(f"{n_states} states exceed the cap {cap}")
    if n_states < 2:
        raise DegenerateSpectrumError("single-state configuration space has no gap")
    colors = [c for c, k in enumerate(full) for _ in range(k)]
    states = _multiset_permutations(colors)
    base = len(full)
    powers = base ** np.arange(sites - 1, -1, -1, dtype=np.int64)
    codes = states.astype(np.int64) @ powers
    order = np.argsort(codes)
    states, codes = states[order], codes[order]
    rows, cols = [], []
    for j in range(sites):
        for k in range(j + 1, sites):
            a, b = states[:, j].astype(np.int64), states[:, k].astype(np.int64)
            moving = np.nonzero(a != b)[0]
            new = codes[moving] + (b[moving] - a[moving]) * powers[j] + (a[moving] - b[moving]) * powers[k]
            rows.append(moving)
            cols.append(np.searchsorted(codes, new))
    r, c = np.concatenate(rows), np.concatenate(cols)
    # ordered pairs (j, k) and (k, j) both swap, hence 2 / N per unordered pair
    off = sparse.coo_matrix((np.full(r.size, 2.0 / sites), (r, c)), shape=(n_states, n_states)).tocsr()
    L = off - sparse.diags(np.asarray(off.sum(axis=1)).ravel())
    if n_states <= 4000:
        ev = eigh(-L.toarray(), eigvals_only=True, subset_by_index=[0, 1])
    else:
        ev = np.sort(eigsh(-L.tocsc(), k=2, sigma=-1e-3, which="LM", return_eigenvectors=False))
    return float(ev[1])
