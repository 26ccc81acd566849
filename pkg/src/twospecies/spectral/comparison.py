"""Per-bond comparison between the tilde and the full Dirichlet forms.

For a single bond both forms only see the two spins on it, so the sharpest
constant in ``E~_b(f) <= C E_b(f)`` is the top eigenvalue of a generalised
eigenproblem on the 9 two-site states, restricted to the range of the full
form.  The check also evaluates the same ratio for one bond of a finite box
(on the whole hyperplane) and for random test vectors there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from ..hyperplane import enumerate_states
from ..lattice import TorusGeometry
from ..measures import canonical_log_weights, marginals
from ..process import CaseTag, RateSet
from .generator import assemble, tilde_rates

PAIR_STATES = np.array([(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)], dtype=np.int8)
PAIR_CODES = (PAIR_STATES[:, 0].astype(np.int64) + 1) * 3 + PAIR_STATES[:, 1] + 1


@dataclass(frozen=True)
class ComparisonResult:
    ratio: float  # best empirical constant found
    bound: float  # 1 / min{C+, C-, CA/3}
    local_ratio: float
    hyperplane_ratio: float
    random_ratio: float

    @property
    def slack(self) -> float:
        return self.bound - self.ratio


def comparison_bound(rates: RateSet) -> float:
    return 1.0 / min(rates.c_plus, rates.c_minus, rates.c_annihilate / 3.0)


def _form_matrix(Q, w) -> np.ndarray:
    """Symmetric matrix of the Dirichlet form ``f -> <-Q f, f>_w``."""
    A = -(np.diag(w) @ Q.toarray())
    return 0.5 * (A + A.T)


def max_form_ratio(A: np.ndarray, B: np.ndarray, tol: float = 1e-12) -> float:
    """``sup f^T A f / f^T B f`` over ``f`` outside the kernel of ``B``."""
    s, U = eigh(B)
    cut = tol * max(1.0, float(np.abs(s).max()))
    rng = s > cut
    if not rng.any():
        return 0.0
    ker = U[:, ~rng]
    if ker.size and np.abs(ker.T @ A @ ker).max() > 1e-9 * max(1.0, np.abs(A).max()):
        raise ValueError("tilde form is not dominated: it is nonzero on the kernel of the full form")
    P = U[:, rng] / np.sqrt(s[rng])
    return float(eigh(P.T @ A @ P, eigvals_only=True)[-1])


def _bond_forms(states, codes, w, rates) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = np.array([0, 1]), np.array([1, 0])
    one = np.ones(2)
    full = assemble(states, codes, xs, ys, one, rates)
    tilde = assemble(states, codes, xs, ys, one, tilde_rates(rates))
    return _form_matrix(tilde, w), _form_matrix(full, w)


def local_comparison_ratio(rates: RateSet, rho: float) -> float:
    """Exact constant on the two-site space under the product weights at ``rho``."""
    p = marginals(rho, rates).as_array()
    w = p[PAIR_STATES[:, 0] + 1] * p[PAIR_STATES[:, 1] + 1]
    keep = w > 0
    A, B = _bond_forms(PAIR_STATES[keep], PAIR_CODES[keep], w[keep], rates)
    return max_form_ratio(A, B)


def comparison_check(
    geom: TorusGeometry,
    K: int,
    rates: RateSet,
    n_random: int = 200,
    seed: int = 0,
    rhos: tuple[float, ...] | None = None,
) -> ComparisonResult:
    """Largest ratio of tilde to full per-bond forms; raises if above the bound."""
    if rates.case is CaseTag.CASE3:
        raise ValueError("the comparison needs C_A > 0 (Case 1 or 2)")
    if geom.periodic:
        raise ValueError("comparison is carried out on a free-boundary box")
    if rhos is None:
        rhos = (-0.5, 0.0, 0.5) if rates.case is CaseTag.CASE1 else (-0.5, 0.5)
    local = max(local_comparison_ratio(rates, r) for r in rhos)

    # bond (0, 1) of the box, on the hyperplane of charge K
    V = geom.n_sites
    hp = enumerate_states(V, K)
    lw = canonical_log_weights(hp, rates)
    keep = np.isfinite(lw)
    states, codes = hp.spins[keep], hp.codes[keep]
    w = np.exp(lw[keep] - lw[keep].max())
    w /= w.sum()
    y = 1 if geom.d == 1 else geom.shift(0, 1, 1)
    xs, ys, one = np.array([0, y]), np.array([y, 0]), np.ones(2)
    A = _form_matrix(assemble(states, codes, xs, ys, one, tilde_rates(rates)), w)
    B = _form_matrix(assemble(states, codes, xs, ys, one, rates), w)
    hyper = max_form_ratio(A, B) if len(states) > 1 else 0.0

    rng = np.random.default_rng(seed)
    rand = 0.0
    for _ in range(n_random):
        f = rng.standard_normal(len(states))
        den = f @ B @ f
        if den > 1e-12:
            rand = max(rand, float(f @ A @ f / den))

    bound = comparison_bound(rates)
    ratio = max(local, hyper, rand)
    if ratio > bound + 1e-9:
        raise AssertionError(f"comparison ratio {ratio:.12g} exceeds the bound {bound:.12g}")
    return ComparisonResult(ratio, bound, local, hyper, rand)
