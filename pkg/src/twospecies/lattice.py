"""Geometry of the discrete torus and of the free-boundary box.

Sites are indexed row-major: the coordinate tuple ``(c_1, ..., c_d)`` with
``0 <= c_i < N`` maps to ``sum_i c_i * N**(d - i)``, so the last axis varies
fastest.  The box ``{1, ..., N}^d`` is stored shifted to base 0.

On a torus with ``N == 2`` the neighbours ``x + e_i`` and ``x - e_i`` coincide.
Such doubled adjacencies are collapsed into a single directed bond carrying
``multiplicity == 2``; rates attached to a bond are multiplied by its
multiplicity wherever a generator or a jump clock is assembled.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np


class DirectedBond(NamedTuple):
    x: int
    y: int
    multiplicity: int = 1

    def reversed(self) -> "DirectedBond":
        return DirectedBond(self.y, self.x, self.multiplicity)


@dataclass(frozen=True)
class TorusGeometry:
    d: int
    N: int
    periodic: bool = True

    @property
    def n_sites(self) -> int:
        return self.N**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def n_directed_bonds(self) -> int:
        """Number of ordered nearest-neighbour pairs, counted with multiplicity."""
        if self.periodic:
            return 2 * self.d * self.N**self.d
        return 2 * self.d * self.N ** (self.d - 1) * (self.N - 1)

    def coords(self, site: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(int(site), self.shape))

    def site(self, coords: Sequence[int]) -> int:
        if len(coords) != self.d:
            raise ValueError(f"expected {self.d} coordinates, got {len(coords)}")
        if self.periodic:
            coords = [int(c) % self.N for c in coords]
        elif any(not 0 <= c < self.N for c in coords):
            raise ValueError(f"coordinates {tuple(coords)} outside the box")
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    def shift(self, site: int, axis: int, step: int = 1) -> int | None:
        """Site reached from ``site`` by ``step`` units along ``axis`` (1-based).

        Returns ``None`` when the move leaves a free-boundary box.
        """
        c = list(self.coords(site))
        c[axis - 1] += step
        if not self.periodic and not 0 <= c[axis - 1] < self.N:
            return None
        return self.site(c)

    @cached_property
    def positions(self) -> np.ndarray:
        """Macroscopic positions ``x / N`` in ``[0, 1)^d``, shape ``(n_sites, d)``."""
        grids = np.indices(self.shape).reshape(self.d, -1).T
        return grids / self.N

    @cached_property
    def _bond_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        grid = np.indices(self.shape).reshape(self.d, -1)
        src = np.arange(self.n_sites, dtype=np.int64)
        xs, ys = [], []
        for axis in range(self.d):
            for step in (1, -1):
                c = grid.copy()
                c[axis] += step
                if self.periodic:
                    c[axis] %= self.N
                    keep = np.ones(self.n_sites, dtype=bool)
                else:
                    keep = (c[axis] >= 0) & (c[axis] < self.N)
                xs.append(src[keep])
                ys.append(np.ravel_multi_index(tuple(c[:, keep]), self.shape))
        key = np.concatenate(xs) * self.n_sites + np.concatenate(ys)
        key, mult = np.unique(key, return_counts=True)
        tables = (key // self.n_sites, key % self.n_sites, mult.astype(np.int64))
        for arr in tables:
            arr.setflags(write=False)
        return tables


def make_geometry(d: int, N: int, periodic: bool = True) -> TorusGeometry:
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    if int(N) != N or N < 2:
        raise ValueError(f"side length must be an integer >= 2, got {N!r}")
    return TorusGeometry(int(d), int(N), bool(periodic))


def bonds(geom: TorusGeometry) -> list[DirectedBond]:
    """All directed nearest-neighbour bonds, sorted by ``(x, y)``.

    Every bond appears once and its reverse is always present.  Collapsed
    adjacencies on ``N == 2`` tori carry multiplicity 2.
    """
    xs, ys, mult = geom._bond_table
    return [DirectedBond(int(a), int(b), int(m)) for a, b, m in zip(xs, ys, mult)]


def bond_arrays(geom: TorusGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(x, y, multiplicity)`` arrays for vectorised generator assembly."""
    return geom._bond_table


def reflect_site(geom: TorusGeometry, site: int, axis: int) -> int:
    """Reflection through the midpoint of the bond ``(0, e_axis)``.

    The coordinate along ``axis`` is mapped to ``-c + 1 (mod N)``; other
    coordinates are unchanged.
    """
    if not geom.periodic:
        raise ValueError("reflection is defined on the torus only")
    if not 1 <= axis <= geom.d:
        raise ValueError(f"axis must lie in 1..{geom.d}, got {axis}")
    c = list(geom.coords(site))
    c[axis - 1] = (-c[axis - 1] + 1) % geom.N
    return geom.site(c)


def _offsets(d: int, l: int, shape: str) -> list[tuple[int, ...]]:
    rng = range(-l, l + 1)
    if shape == "cube":
        return list(itertools.product(rng, repeat=d))
    if shape == "ball":
        return [o for o in itertools.product(rng, repeat=d) if sum(map(abs, o)) <= l]
    raise ValueError(f"unknown block shape {shape!r}; use 'ball' or 'cube'")


def block_sites(geom: TorusGeometry, center: int, l: int, shape: str = "ball") -> list[int]:
    """Sites within distance ``l`` of ``center`` on the torus.

    ``shape='ball'`` uses the sum norm, ``shape='cube'`` the sup norm (the
    cube ``center + {-l, ..., l}^d``).
    """
    if not geom.periodic:
        raise ValueError("blocks are taken on the torus only")
    if l < 0:
        raise ValueError("block radius must be nonnegative")
    if 2 * l + 1 > geom.N:
        raise ValueError(f"block of radius {l} wraps around a torus of side {geom.N}")
    c = np.array(geom.coords(center))
    return [geom.site(c + np.array(o)) for o in _offsets(geom.d, l, shape)]
