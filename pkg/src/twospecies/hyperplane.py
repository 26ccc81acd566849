"""Enumeration of spin configurations with prescribed total charge.

States are generated site by site with charge pruning, which yields them in
lexicographic order of the spin vector (with -1 < 0 < 1).  Each state carries
a base-3 code, increasing along the list, so membership and index lookup are a
binary search over the code array.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_CODE_SITES = 39  # 3**39 < 2**63


def count_states(volume: int, K: int) -> int:
    """Number of vectors in ``{-1,0,1}^volume`` summing to ``K``."""
    if abs(K) > volume:
        return 0
    # coefficient of z^K in (z^-1 + 1 + z)^volume, by repeated convolution
    poly = np.zeros(1, dtype=object)
    poly[0] = 1
    for _ in range(volume):
        nxt = np.zeros(poly.size + 2, dtype=object)
        nxt[:-2] += poly
        nxt[1:-1] += poly
        nxt[2:] += poly
        poly = nxt
    return int(poly[K + volume])


@dataclass(frozen=True, eq=False)
class HyperplaneStates:
    volume: int
    K: int
    spins: np.ndarray  # (n_states, volume) int8
    codes: np.ndarray  # (n_states,) int64, strictly increasing

    def __len__(self) -> int:
        return self.spins.shape[0]

    def index_of(self, codes: np.ndarray) -> np.ndarray:
        """Indices of the given codes; ``-1`` where a code is not a state."""
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.searchsorted(self.codes, codes)
        pos = np.minimum(pos, len(self) - 1)
        return np.where(self.codes[pos] == codes, pos, -1)


def encode(spins: np.ndarray) -> np.ndarray:
    spins = np.atleast_2d(spins)
    powers = 3 ** np.arange(spins.shape[1] - 1, -1, -1, dtype=np.int64)
    return (spins.astype(np.int64) + 1) @ powers


def enumerate_states(volume: int, K: int, cap: int = 2_000_000) -> HyperplaneStates:
    if volume < 1:
        raise ValueError("volume must be positive")
    if abs(K) > volume:
        raise ValueError(f"|K| = {abs(K)} exceeds the volume {volume}")
    if volume > MAX_CODE_SITES:
        raise ValueError(f"volume {volume} too large for integer state codes")
    n = count_states(volume, K)
    if n > cap:
        raise ValueError(f"hyperplane has {n} states, above the cap {cap}")
    return _enumerate_cached(volume, K)


@lru_cache(maxsize=64)
def _enumerate_cached(volume: int, K: int) -> HyperplaneStates:
    partial = np.zeros((1, 0), dtype=np.int8)
    sums = np.zeros(1, dtype=np.int64)
    for i in range(volume):
        remaining = volume - i - 1
        blocks, block_sums = [], []
        for s in (-1, 0, 1):
            new_sum = sums + s
            keep = np.abs(K - new_sum) <= remaining
            col = np.full((int(keep.sum()), 1), s, dtype=np.int8)
            blocks.append((np.nonzero(keep)[0], np.hstack([partial[keep], col])))
            block_sums.append(new_sum[keep])
        # interleave so that children of row r come before children of row r+1
        parent = np.concatenate([b[0] for b in blocks])
        order = np.argsort(parent, kind="stable")
        partial = np.concatenate([b[1] for b in blocks])[order]
        sums = np.concatenate(block_sums)[order]
    spins = np.ascontiguousarray(partial)
    codes = encode(spins) if spins.shape[1] else np.zeros(1, dtype=np.int64)
    spins.setflags(write=False)
    codes.setflags(write=False)
    return HyperplaneStates(volume, K, spins, codes)
