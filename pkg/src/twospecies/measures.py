"""Reversible product measures and their canonical restrictions.

In Case 1 the single-site law of the grand-canonical measure at density ``rho``
is ``((1 - Phi + rho)/2, Phi, (1 - Phi - rho)/2)`` where ``Phi(rho)`` solves
``p_plus * p_minus = beta * p_zero**2``.  Case 2 (no creation) keeps only one
species of particles; Case 3 (no annihilation) has no holes.

Conditioning a product measure on the total charge ``K`` of ``V`` sites gives
weights proportional to ``beta**Y`` with ``Y`` the number of +/- pairs, so the
canonical measure does not depend on the density used to condition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .hyperplane import HyperplaneStates, enumerate_states
from .lattice import TorusGeometry, make_geometry
from .process import CaseTag, Configuration, RateSet

_BRANCH_TOL = 1e-6
ENUMERATION_LIMIT = 10**7
EXACT_SAMPLING_VOLUME = 14


@dataclass(frozen=True)
class Marginals:
    p_plus: float
    p_zero: float
    p_minus: float

    def as_array(self) -> np.ndarray:
        """Probabilities ordered by spin value ``(-1, 0, +1)``."""
        return np.array([self.p_minus, self.p_zero, self.p_plus])

    @property
    def mean(self) -> float:
        return self.p_plus - self.p_minus


def _check_rho(rho) -> np.ndarray:
    r = np.asarray(rho, dtype=np.float64)
    if np.any(~np.isfinite(r)) or np.any(np.abs(r) > 1 + 1e-12):
        raise ValueError(f"density must lie in [-1, 1], got {rho}")
    return np.clip(r, -1.0, 1.0)


def _case1_beta(rates: RateSet) -> float:
    if rates.case is not CaseTag.CASE1:
        raise ValueError(f"Phi is defined by a closed form only in Case 1, got {rates.case}")
    return rates.beta()


def phi(rho, rates: RateSet):
    """Hole density ``Phi(rho)`` under the grand-canonical measure (Case 1)."""
    beta = _case1_beta(rates)
    r = _check_rho(rho)
    s = np.sqrt(4 * beta + (1 - 4 * beta) * r**2)
    if abs(1 - 4 * beta) >= _BRANCH_TOL:
        out = (1 - s) / (1 - 4 * beta)
    else:
        # conjugate form; the closed form is 0/0 at beta = 1/4
        out = (1 - r**2) / (1 + s)
    return float(out) if np.ndim(out) == 0 else out


def phi_prime(rho, rates: RateSet):
    beta = _case1_beta(rates)
    r = _check_rho(rho)
    out = -r / np.sqrt(4 * beta + (1 - 4 * beta) * r**2)
    return float(out) if np.ndim(out) == 0 else out


def marginals(rho: float, rates: RateSet, hole_fraction: float | None = None) -> Marginals:
    """Single-site law of the reversible product measure with mean ``rho``.

    ``hole_fraction`` overrides the hole density with a fixed value ``q``,
    giving ``((1 - q + rho)/2, q, (1 - q - rho)/2)``.  This is not a reversible
    law in Case 1; it is meant for initial data in Case 3, whose reversible
    measures carry no holes at all.
    """
    rho = float(_check_rho(rho))
    if hole_fraction is not None:
        q = float(hole_fraction)
        if not 0 <= q <= 1 or abs(rho) > 1 - q + 1e-12:
            raise ValueError(f"hole fraction {q} incompatible with density {rho}")
        return Marginals(max((1 - q + rho) / 2, 0.0), q, max((1 - q - rho) / 2, 0.0))
    case = rates.case
    if case is CaseTag.CASE1:
        p0 = phi(rho, rates)
        return Marginals(max((1 - p0 + rho) / 2, 0.0), p0, max((1 - p0 - rho) / 2, 0.0))
    if case is CaseTag.CASE2:
        return Marginals(max(rho, 0.0), 1 - abs(rho), abs(min(rho, 0.0)))
    return Marginals((1 + rho) / 2, 0.0, (1 - rho) / 2)


def compressibility(rho: float, rates: RateSet) -> float:
    """Variance of one spin, ``<eta(0)^2> - <eta(0)>^2``."""
    m = marginals(rho, rates)
    return (m.p_plus + m.p_minus) - (m.p_plus - m.p_minus) ** 2


def _draw(probs_plus: np.ndarray, probs_zero: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(probs_plus.shape)
    return np.where(u < probs_plus, 1, np.where(u < probs_plus + probs_zero, 0, -1)).astype(np.int8)


def sample_grand(rho: float, rates: RateSet, geom: TorusGeometry, seed) -> Configuration:
    m = marginals(rho, rates)
    rng = np.random.default_rng(seed)
    n = geom.n_sites
    spins = _draw(np.full(n, m.p_plus), np.full(n, m.p_zero), rng)
    return Configuration(spins, geom)


def local_equilibrium(
    profile: Callable[[np.ndarray], np.ndarray],
    rates: RateSet,
    geom: TorusGeometry,
    seed,
    hole_fraction: float | None = None,
) -> Configuration:
    """Independent spins with site-dependent density ``profile(x / N)``.

    ``profile`` receives the ``(n_sites, d)`` array of macroscopic positions
    (a flat array when ``d == 1``) and returns one density per site.
    """
    pos = geom.positions[:, 0] if geom.d == 1 else geom.positions
    rho = _check_rho(np.asarray(profile(pos), dtype=np.float64).reshape(-1))
    p_plus = np.empty_like(rho)
    p_zero = np.empty_like(rho)
    for i, r in enumerate(rho):
        m = marginals(r, rates, hole_fraction)
        p_plus[i], p_zero[i] = m.p_plus, m.p_zero
    rng = np.random.default_rng(seed)
    return Configuration(_draw(p_plus, p_zero, rng), geom)


def deterministic_profile(profile: Callable[[np.ndarray], np.ndarray], geom: TorusGeometry) -> Configuration:
    """Spins obtained by thresholding the cumulative charge along the last axis.

    Each row of sites along the last axis receives spins whose partial sums
    track the rounded partial sums of ``profile``, so block averages follow the
    profile up to one unit of charge per row.
    """
    pos = geom.positions[:, 0] if geom.d == 1 else geom.positions
    rho = _check_rho(np.asarray(profile(pos), dtype=np.float64)).reshape(-1, geom.N)
    cum = np.round(np.concatenate([np.zeros((rho.shape[0], 1)), np.cumsum(rho, axis=1)], axis=1))
    spins = np.clip(np.diff(cum, axis=1), -1, 1).astype(np.int8)
    return Configuration(spins.reshape(-1), geom)


@dataclass(frozen=True, eq=False)
class CanonicalEnsemble:
    volume: int
    K: int
    states: np.ndarray  # (n, volume) int8, positive-weight states only
    weights: np.ndarray  # (n,), sums to 1
    codes: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


def canonical_log_weights(hp: HyperplaneStates, rates: RateSet, rho: float | None = None) -> np.ndarray:
    """Unnormalised log-weights of the hyperplane states (``-inf`` off the support)."""
    rho = hp.K / hp.volume if rho is None else rho
    m = marginals(rho, rates)
    with np.errstate(divide="ignore"):
        logp = np.log(m.as_array())
    idx = hp.spins.astype(np.int64) + 1
    counts = np.stack([(idx == j).sum(axis=1) for j in range(3)], axis=1)
    lw = np.zeros(len(hp))
    for j in range(3):
        present = counts[:, j] > 0
        lw[present] += counts[present, j] * logp[j]
    return lw


def canonical_enumerate(volume: int, K: int, rates: RateSet, rho: float | None = None) -> CanonicalEnsemble:
    """Exact canonical measure on ``volume`` sites with total charge ``K``.

    ``rho`` is the density of the product measure that gets conditioned
    (default ``K / volume``).  States of zero weight, which occur in Cases 2
    and 3, are dropped.
    """
    if abs(K) > volume:
        raise ValueError(f"|K| = {abs(K)} exceeds the volume {volume}")
    if 3**volume > ENUMERATION_LIMIT:
        raise ValueError(f"volume {volume} too large to enumerate (3^V > {ENUMERATION_LIMIT:g})")
    hp = enumerate_states(volume, K, cap=ENUMERATION_LIMIT)
    lw = canonical_log_weights(hp, rates, rho)
    keep = np.isfinite(lw)
    if not keep.any():
        raise ValueError(f"no configuration of charge {K} has positive weight at rho={rho}")
    lw = lw[keep]
    w = np.exp(lw - logsumexp(lw))
    return CanonicalEnsemble(volume, K, hp.spins[keep], w / w.sum(), hp.codes[keep])


def sample_canonical(
    volume: int,
    K: int,
    rates: RateSet,
    seed,
    geom: TorusGeometry | None = None,
    max_attempts: int = 1_000_000,
) -> Configuration:
    """Exact draw from the canonical measure, returned on ``geom``.

    ``geom`` defaults to a one-dimensional box of ``volume`` sites.
    """
    if abs(K) > volume:
        raise ValueError(f"|K| = {abs(K)} exceeds the volume {volume}")
    if geom is None:
        geom = make_geometry(1, volume, periodic=False) if volume >= 2 else TorusGeometry(1, 1, False)
    if geom.n_sites != volume:
        raise ValueError("geometry does not match the volume")
    rng = np.random.default_rng(seed)
    if volume <= EXACT_SAMPLING_VOLUME:
        ens = canonical_enumerate(volume, K, rates)
        i = rng.choice(len(ens), p=ens.weights)
        return Configuration(ens.states[i], geom)
    m = marginals(K / volume, rates)
    pp, pz = np.full(volume, m.p_plus), np.full(volume, m.p_zero)
    for _ in range(max_attempts):
        s = _draw(pp, pz, rng)
        if int(s.sum(dtype=np.int64)) == K:
            return Configuration(s, geom)
    raise RuntimeError(f"rejection sampler found no configuration of charge {K} in {max_attempts} attempts")
