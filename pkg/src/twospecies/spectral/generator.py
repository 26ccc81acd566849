"""Finite-volume generators on fixed-charge hyperplanes and their gaps.

Variants
--------
``full``
    the process itself on a free-boundary box.
``tilde``
    same box, rates ``C+ = C- = CA = CE = 1`` and ``CC = beta``.
``meanfield``
    tilde rates on every ordered pair of distinct sites, scaled by ``1/V``.
``torus``
    the process on a periodic geometry (bond multiplicities included).

Only states of positive canonical weight are kept; in Cases 2 and 3 this
removes configurations the dynamics can never reach from the support.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh
from scipy.special import logsumexp

from ..hyperplane import enumerate_states
from ..lattice import TorusGeometry, bond_arrays
from ..measures import canonical_log_weights
from ..process import MOVE_X, MOVE_Y, RateSet, rate_table

VARIANTS = ("full", "tilde", "meanfield", "torus")
DEFAULT_STATE_CAP = 2_000_000
DENSE_LIMIT = 4000


class DegenerateSpectrumError(ValueError):
    """The state space has a single state, so no gap is defined."""


class ReducibleGeneratorError(RuntimeError):
    pass


class FrozenGeneratorWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    states: np.ndarray  # (n, V) int8
    codes: np.ndarray  # (n,) increasing base-3 codes
    Q: sparse.csr_matrix  # rows sum to zero
    weights: np.ndarray  # reversible probability vector
    variant: str
    geom: TorusGeometry
    K: int
    rates: RateSet

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def is_frozen(self) -> bool:
        return self.Q.nnz == 0 or not np.any(self.Q.data)

    def symmetrized(self) -> sparse.csr_matrix:
        """``W^{1/2} Q W^{-1/2}``, symmetrised to remove rounding asymmetry."""
        r = np.sqrt(self.weights)
        S = sparse.diags(r) @ self.Q @ sparse.diags(1 / r)
        return ((S + S.T) * 0.5).tocsr()


def tilde_rates(rates: RateSet) -> RateSet:
    return RateSet(1.0, 1.0, 1.0, 1.0, rates.beta())


def variant_pairs(geom: TorusGeometry, variant: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Directed site pairs ``(x, y)`` with their multiplicities (as floats)."""
    if variant == "meanfield":
        V = geom.n_sites
        xs, ys = np.nonzero(~np.eye(V, dtype=bool))
        return xs, ys, np.full(xs.size, 1.0 / V)
    xs, ys, mult = bond_arrays(geom)
    return xs, ys, mult.astype(np.float64)


def assemble(
    states: np.ndarray,
    codes: np.ndarray,
    xs: np.ndarray,
    ys: np.ndarray,
    mult: np.ndarray,
    rates: RateSet,
) -> sparse.csr_matrix:
    """Sparse generator for local moves on the listed directed pairs.

    Transitions leaving the listed state set are dropped; callers pass state
    sets closed under the dynamics (hyperplanes or their weight supports).
    """
    n, V = states.shape
    table = rate_table(rates).reshape(-1)
    mx = MOVE_X.reshape(-1).astype(np.int64)
    my = MOVE_Y.reshape(-1).astype(np.int64)
    powers = 3 ** np.arange(V - 1, -1, -1, dtype=np.int64)
    rows, cols, vals = [], [], []
    for x, y, m in zip(xs, ys, mult):
        a = states[:, x].astype(np.int64)
        b = states[:, y].astype(np.int64)
        key = (a + 1) * 3 + b + 1
        rate = table[key] * m
        active = np.nonzero(rate > 0)[0]
        if active.size == 0:
            continue
        k = key[active]
        new = codes[active] + (mx[k] - a[active]) * powers[x] + (my[k] - b[active]) * powers[y]
        pos = np.minimum(np.searchsorted(codes, new), n - 1)
        found = codes[pos] == new
        rows.append(active[found])
        cols.append(pos[found])
        vals.append(rate[active][found])
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    off = sparse.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    diag = np.asarray(off.sum(axis=1)).ravel()
    return (off - sparse.diags(diag)).tocsr()


def build_generator(
    geom: TorusGeometry,
    K: int,
    rates: RateSet,
    variant: str = "full",
    cap: int = DEFAULT_STATE_CAP,
) -> GeneratorMatrix:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    if variant == "torus" and not geom.periodic:
        raise ValueError("the torus variant needs a periodic geometry")
    if variant != "torus" and geom.periodic:
        raise ValueError(f"the {variant} variant lives on a free-boundary box")
    V = geom.n_sites
    if abs(K) > V:
        raise ValueError(f"|K| = {abs(K)} exceeds the volume {V}")
    hp = enumerate_states(V, K, cap=cap)
    dyn_rates = tilde_rates(rates) if variant in ("tilde", "meanfield") else rates
    lw = canonical_log_weights(hp, rates)
    keep = np.isfinite(lw)
    states, codes, lw = hp.spins[keep], hp.codes[keep], lw[keep]
    w = np.exp(lw - logsumexp(lw))
    xs, ys, mult = variant_pairs(geom, variant)
    Q = assemble(states, codes, xs, ys, mult, dyn_rates)
    return GeneratorMatrix(states, codes, Q, w / w.sum(), variant, geom, K, rates)


def reversibility_defect(gen: GeneratorMatrix) -> float:
    """``max |w_i q_ij - w_j q_ji|`` over off-diagonal entries."""
    F = sparse.diags(gen.weights) @ gen.Q
    D = (F - F.T).tocoo()
    return float(np.max(np.abs(D.data))) if D.nnz else 0.0


def _check_irreducible(gen: GeneratorMatrix) -> None:
    n_comp, _ = connected_components(gen.Q, directed=True, connection="strong")
    if n_comp > 1:
        raise ReducibleGeneratorError(
            f"{gen.variant} generator on {len(gen)} states (K={gen.K}) splits into "
            f"{n_comp} communicating classes"
        )


def spectral_gap(gen: GeneratorMatrix, tol: float = 1e-10) -> float:
    """Smallest nonzero eigenvalue of ``-Q`` in ``L^2(w)``.

    Frozen generators (no admissible move at all) return 0 with a warning.
    """
    n = len(gen)
    if n < 2:
        raise DegenerateSpectrumError("single-state hyperplane has no spectral gap")
    if gen.is_frozen:
        warnings.warn("generator has no admissible moves; reporting gap 0", FrozenGeneratorWarning, stacklevel=2)
        return 0.0
    _check_irreducible(gen)
    S = -gen.symmetrized()
    if n <= DENSE_LIMIT:
        ev = eigh(S.toarray(), eigvals_only=True, subset_by_index=[0, 1])
    else:
        # shift-invert just below zero; the kernel is one-dimensional
        scale = float(abs(S.diagonal()).max())
        ev = eigsh(S.tocsc(), k=2, sigma=-1e-3 * scale, which="LM", tol=tol, return_eigenvectors=False)
        ev = np.sort(ev)
    scale = max(1.0, float(abs(S.diagonal()).max()))
    if abs(ev[0]) > 1e-8 * scale:
        raise RuntimeError(f"lowest eigenvalue {ev[0]:.3e} of -Q is not zero")
    return float(ev[1])


def dirichlet_form(gen: GeneratorMatrix, f, g) -> float:
    """``<-Q f, g>_w``."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != (len(gen),) or g.shape != (len(gen),):
        raise ValueError(f"vectors must have shape ({len(gen)},)")
    return float(-(gen.weights * g) @ (gen.Q @ f))
