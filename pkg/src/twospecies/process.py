"""Microscopic dynamics: rates, moves, generator and currents.

A bond ``b = (x, y)`` is active when the ordered pair ``(eta(x), eta(y))`` is
one of five patterns; each pattern has its own rate constant and its own move:

=========  ==========  =========
pair       rate        result
=========  ==========  =========
(+1, 0)    C_plus      (0, +1)
(0, -1)    C_minus     (-1, 0)
(-1, +1)   C_exchange  (+1, -1)
(+1, -1)   C_annihil.  (0, 0)
(0, 0)     C_create    (-1, +1)
=========  ==========  =========

Every move conserves the total charge ``sum_x eta(x)``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import DirectedBond, TorusGeometry, bonds

SPINS = (-1, 0, 1)


class GradientConditionWarning(UserWarning):
    pass


class CaseTag(enum.Enum):
    CASE1 = 1
    CASE2 = 2
    CASE3 = 3

    def __str__(self) -> str:
        return f"Case{self.value}"


@dataclass(frozen=True)
class RateSet:
    c_plus: float
    c_minus: float
    c_exchange: float
    c_annihilate: float
    c_create: float

    def __post_init__(self):
        vals = self.as_tuple()
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise ValueError(f"rates must be finite and nonnegative, got {vals}")
        if self.c_plus <= 0 or self.c_minus <= 0:
            raise ValueError("c_plus and c_minus must be positive")
        if self.c_annihilate == 0 and self.c_create == 0:
            raise ValueError("at least one of c_annihilate, c_create must be positive")

    @classmethod
    def from_sequence(cls, values) -> "RateSet":
        vals = [float(v) for v in values]
        if len(vals) != 5:
            raise ValueError(f"expected 5 rates (C+, C-, CE, CA, CC), got {len(vals)}")
        return cls(*vals)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.c_plus, self.c_minus, self.c_exchange, self.c_annihilate, self.c_create)

    @property
    def case(self) -> CaseTag:
        return classify_case(self)

    def beta(self) -> float:
        if self.c_annihilate <= 0:
            raise ValueError("beta = C_C / C_A is undefined when C_A = 0")
        return self.c_create / self.c_annihilate

    def gradient_defect(self) -> float:
        """Left-hand side of the gradient condition for the active case."""
        if self.case is CaseTag.CASE3:
            return self.c_plus + self.c_minus - 2 * self.c_exchange
        return self.c_plus + self.c_minus - self.c_annihilate - 2 * self.c_exchange

    def is_gradient(self, tol: float = 1e-12) -> bool:
        return abs(self.gradient_defect()) <= tol

    def swapped(self) -> "RateSet":
        """Rates of the process seen through the duality eta -> -eta."""
        return RateSet(self.c_minus, self.c_plus, self.c_exchange, self.c_annihilate, self.c_create)


def classify_case(rates: RateSet) -> CaseTag:
    if rates.c_annihilate > 0 and rates.c_create > 0:
        return CaseTag.CASE1
    if rates.c_annihilate > 0:
        return CaseTag.CASE2
    if rates.c_create > 0:
        return CaseTag.CASE3
    raise ValueError("C_A = C_C = 0 has no conserved-charge classification")


# Lookup tables indexed by (eta(x) + 1, eta(y) + 1).
# RATE_INDEX holds the position in RateSet.as_tuple(), -1 for inactive pairs.
RATE_INDEX = np.full((3, 3), -1, dtype=np.int64)
RATE_INDEX[2, 1] = 0  # (+1, 0)  -> C+
RATE_INDEX[1, 0] = 1  # (0, -1)  -> C-
RATE_INDEX[0, 2] = 2  # (-1, +1) -> CE
RATE_INDEX[2, 0] = 3  # (+1, -1) -> CA
RATE_INDEX[1, 1] = 4  # (0, 0)   -> CC

MOVE_X = np.zeros((3, 3), dtype=np.int8)
MOVE_Y = np.zeros((3, 3), dtype=np.int8)
for (_a, _b), (_p, _q) in {
    (1, 0): (0, 1),
    (0, -1): (-1, 0),
    (-1, 1): (1, -1),
    (1, -1): (0, 0),
    (0, 0): (-1, 1),
}.items():
    MOVE_X[_a + 1, _b + 1] = _p
    MOVE_Y[_a + 1, _b + 1] = _q


def rate_table(rates: RateSet) -> np.ndarray:
    """3x3 array ``T[a+1, b+1] = c_b`` for the ordered spin pair ``(a, b)``."""
    vals = np.array(rates.as_tuple(), dtype=np.float64)
    out = np.where(RATE_INDEX >= 0, vals[np.maximum(RATE_INDEX, 0)], 0.0)
    return out


def pair_rate(a: int, b: int, rates: RateSet) -> float:
    idx = RATE_INDEX[a + 1, b + 1]
    return 0.0 if idx < 0 else rates.as_tuple()[idx]


def pair_move(a: int, b: int) -> tuple[int, int]:
    """Result of firing an active pair ``(a, b)``."""
    if RATE_INDEX[a + 1, b + 1] < 0:
        raise ValueError(f"pair ({a}, {b}) admits no move")
    return int(MOVE_X[a + 1, b + 1]), int(MOVE_Y[a + 1, b + 1])


@dataclass(frozen=True, eq=False)
class Configuration:
    """A spin field on a geometry.  Treated as an immutable value."""

    spins: np.ndarray
    geom: TorusGeometry
    charge: int = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        s = np.ascontiguousarray(self.spins, dtype=np.int8).reshape(-1)
        if s.size != self.geom.n_sites:
            raise ValueError(f"expected {self.geom.n_sites} spins, got {s.size}")
        if np.any((s < -1) | (s > 1)):
            raise ValueError("spins must lie in {-1, 0, 1}")
        s.setflags(write=False)
        object.__setattr__(self, "spins", s)
        total = int(s.sum(dtype=np.int64))
        if self.charge is not None and self.charge != total:
            raise ValueError(f"cached charge {self.charge} disagrees with spins ({total})")
        object.__setattr__(self, "charge", total)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.geom == other.geom and np.array_equal(self.spins, other.spins)

    def __hash__(self) -> int:
        return hash((self.geom, self.spins.tobytes()))

    def __getitem__(self, site: int) -> int:
        return int(self.spins[site])

    def with_spins(self, updates: dict[int, int], charge_change: int = 0) -> "Configuration":
        s = self.spins.copy()
        for site, v in updates.items():
            s[site] = v
        return Configuration(s, self.geom, self.charge + charge_change)

    def to_line(self) -> str:
        return ",".join(str(int(v)) for v in self.spins)

    @classmethod
    def from_line(cls, line: str, geom: TorusGeometry) -> "Configuration":
        return cls(np.array([int(tok) for tok in line.strip().split(",")], dtype=np.int8), geom)


def bond_rate(config: Configuration, bond: DirectedBond, rates: RateSet) -> float:
    """Rate ``c_b(eta)`` of a single directed bond, ignoring multiplicity."""
    return pair_rate(config[bond.x], config[bond.y], rates)


def apply_move(config: Configuration, bond: DirectedBond) -> Configuration:
    a, b = config[bond.x], config[bond.y]
    p, q = pair_move(a, b)
    return config.with_spins({bond.x: p, bond.y: q})


def generator_apply(
    f: Callable[[Configuration], float],
    config: Configuration,
    rates: RateSet,
    geom: TorusGeometry | None = None,
) -> float:
    """``(L f)(eta) = sum_b m_b c_b(eta) (f(eta^b) - f(eta))`` with multiplicities ``m_b``."""
    geom = geom or config.geom
    f0 = f(config)
    total = 0.0
    for bond in bonds(geom):
        c = bond_rate(config, bond, rates)
        if c > 0:
            total += bond.multiplicity * c * (f(apply_move(config, bond)) - f0)
    return total


def current_pair(a: int, b: int, rates: RateSet) -> float:
    """Instantaneous current across a bond whose endpoints carry ``(a, b)``."""
    sab = rates.c_annihilate + 2 * rates.c_exchange

    def psi(p: int, q: int) -> float:
        return float(a == p and b == q)

    return (
        rates.c_plus * (psi(1, 0) - psi(0, 1))
        + sab * (psi(1, -1) - psi(-1, 1))
        + rates.c_minus * (psi(0, -1) - psi(-1, 0))
    )


def current_table(rates: RateSet) -> np.ndarray:
    return np.array([[current_pair(a, b, rates) for b in SPINS] for a in SPINS])


def current(config: Configuration, site: int, direction: int, rates: RateSet) -> float:
    """Current ``W_{x, x+e_i}`` from ``site`` towards its neighbour along axis ``direction``."""
    geom = config.geom
    if not geom.periodic:
        raise ValueError("the current is defined on the torus")
    y = geom.shift(site, direction, 1)
    return current_pair(config[site], config[y], rates)


def flux_h(spin: int, rates: RateSet) -> float:
    """Local flux ``h`` with ``W_{x,y} = h(eta(x)) - h(eta(y))`` in the gradient case."""
    if not rates.is_gradient():
        warnings.warn(
            f"rates {rates.as_tuple()} violate the gradient condition "
            f"(defect {rates.gradient_defect():.3g}); h does not decompose the current",
            GradientConditionWarning,
            stacklevel=2,
        )
    if spin == 1:
        return rates.c_plus
    if spin == -1:
        return -rates.c_minus
    if spin == 0:
        return 0.0
    raise ValueError(f"invalid spin {spin}")
