"""Two-species exclusion processes with exchange, creation and annihilation."""

from .lattice import DirectedBond, TorusGeometry, bonds, make_geometry
from .process import CaseTag, Configuration, RateSet, classify_case

__all__ = [
    "CaseTag",
    "Configuration",
    "DirectedBond",
    "RateSet",
    "TorusGeometry",
    "bonds",
    "classify_case",
    "make_geometry",
]

__version__ = "0.1.0"
