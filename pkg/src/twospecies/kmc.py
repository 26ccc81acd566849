"""Event-driven simulation of the diffusively accelerated dynamics.

Time is macroscopic: every bond clock runs at ``N**2 * m_b * c_b(eta)``.  The
simulation is exact in law (no time discretisation).  Optional test functions
``H`` are tracked during the run: the pairing ``<pi_t, H>`` and the time
integral of its generator drift are accumulated event by event, which gives
the martingale ``M^H(t)`` without quadrature error.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import ndimage

from . import _kmc_kernel
from .lattice import TorusGeometry, block_sites, bond_arrays
from .process import MOVE_X, MOVE_Y, Configuration, RateSet, rate_table

DEFAULT_EVENT_BUDGET = 10**10

TestFunction = Callable[[np.ndarray], np.ndarray]


class EventBudgetExceeded(RuntimeError):
    pass


def sub_seed(master: int, index: int) -> int:
    """Seed of ensemble member ``index``, derived from the master seed."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


def evaluate_on_sites(G: TestFunction, geom: TorusGeometry) -> np.ndarray:
    """``G(x / N)`` for every site; ``G`` gets a flat array in d = 1."""
    pos = geom.positions[:, 0] if geom.d == 1 else geom.positions
    vals = np.broadcast_to(np.asarray(G(pos), dtype=np.float64), (geom.n_sites,))
    return np.ascontiguousarray(vals)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    snapshots: np.ndarray  # (n_snapshots, n_sites) int8
    event_count: int
    seed: int
    geom: TorusGeometry
    rates: RateSet
    initial: Configuration
    T: float
    test_functions: dict[str, TestFunction] = field(default_factory=dict)
    pairings: np.ndarray | None = None  # (n_snapshots, n_test_functions)
    drift_integrals: np.ndarray | None = None

    @property
    def charge(self) -> int:
        return self.initial.charge

    def configuration(self, i: int) -> Configuration:
        return Configuration(self.snapshots[i], self.geom)


@dataclass(frozen=True, eq=False)
class EmpiricalField:
    values: np.ndarray  # one value per site, flattened row-major
    l: int
    geom: TorusGeometry
    time: float = 0.0


def _incidence(geom: TorusGeometry, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ends = np.concatenate([xs, ys])
    ids = np.concatenate([np.arange(xs.size), np.arange(ys.size)])
    order = np.argsort(ends, kind="stable")
    counts = np.bincount(ends, minlength=geom.n_sites)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return ptr, ids[order].astype(np.int64)


def simulate(
    initial: Configuration,
    rates: RateSet,
    geom: TorusGeometry,
    T: float,
    snapshot_times: Sequence[float],
    seed: int,
    test_functions: Mapping[str, TestFunction] | None = None,
    max_events: int = DEFAULT_EVENT_BUDGET,
) -> Trajectory:
    """Run the dynamics accelerated by ``N**2`` up to macroscopic time ``T``."""
    if not T > 0:
        raise ValueError("T must be positive")
    times = np.asarray(snapshot_times, dtype=np.float64)
    if times.size == 0:
        raise ValueError("at least one snapshot time is required")
    if np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] > T:
        raise ValueError("snapshot times must be strictly increasing within [0, T]")
    if initial.geom != geom:
        raise ValueError("initial configuration lives on a different geometry")
    seed = int(seed)
    if not 0 <= seed < 2**32:
        raise ValueError("kernel seeds must fit in 32 bits; derive them with sub_seed")

    tests = dict(test_functions or {})
    hvals = np.zeros((len(tests), geom.n_sites))
    for k, H in enumerate(tests.values()):
        hvals[k] = evaluate_on_sites(H, geom)

    xs, ys, mult = bond_arrays(geom)
    ptr, idx = _incidence(geom, xs, ys)
    spins = np.array(initial.spins, dtype=np.int8)
    snaps = np.zeros((times.size, geom.n_sites), dtype=np.int8)
    pairings = np.zeros((times.size, len(tests)))
    integrals = np.zeros((times.size, len(tests)))
    events = _kmc_kernel.run_kernel(
        spins,
        np.ascontiguousarray(xs),
        np.ascontiguousarray(ys),
        np.ascontiguousarray(mult),
        rate_table(rates).reshape(-1),
        MOVE_X.reshape(-1).copy(),
        MOVE_Y.reshape(-1).copy(),
        ptr,
        idx,
        float(geom.N) ** 2,
        float(geom.N) ** (-geom.d),
        float(T),
        times,
        hvals,
        np.uint32(seed),
        np.int64(max_events),
        snaps,
        pairings,
        integrals,
    )
    if events < 0:
        raise EventBudgetExceeded(f"more than {max_events} events before T = {T}")
    return Trajectory(
        times=times,
        snapshots=snaps,
        event_count=int(events),
        seed=seed,
        geom=geom,
        rates=rates,
        initial=initial,
        T=float(T),
        test_functions=tests,
        pairings=pairings if tests else None,
        drift_integrals=integrals if tests else None,
    )


def simulate_ensemble(
    make_initial: Callable[[int], Configuration],
    rates: RateSet,
    geom: TorusGeometry,
    T: float,
    snapshot_times: Sequence[float],
    master_seed: int,
    members: int,
    threads: int = 1,
    **kwargs,
) -> list[Trajectory]:
    """Independent runs; member ``i`` uses ``sub_seed(master_seed, i)`` for both
    its initial state and its dynamics (offset streams)."""

    def one(i: int) -> Trajectory:
        seed = sub_seed(master_seed, i)
        init = make_initial(seed)
        return simulate(init, rates, geom, T, snapshot_times, sub_seed(seed, 1), **kwargs)

    if threads <= 1:
        return [one(i) for i in range(members)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(members)))


def block_average(config: Configuration, site: int, l: int, shape: str = "cube") -> float:
    """Block average with divisor ``(2l + 1)**d`` around ``site``."""
    geom = config.geom
    sites = block_sites(geom, site, l, shape)
    return float(config.spins[sites].sum(dtype=np.int64)) / (2 * l + 1) ** geom.d


def block_field(spins: np.ndarray, geom: TorusGeometry, l: int) -> np.ndarray:
    """Cube block averages at every site, flattened row-major."""
    if 2 * l + 1 > geom.N:
        raise ValueError(f"block of radius {l} wraps around a torus of side {geom.N}")
    arr = np.asarray(spins, dtype=np.float64).reshape(geom.shape)
    return ndimage.uniform_filter(arr, size=2 * l + 1, mode="wrap").reshape(-1)


def empirical_field(config: Configuration, l: int, time: float = 0.0) -> EmpiricalField:
    return EmpiricalField(block_field(config.spins, config.geom, l), l, config.geom, time)


def empirical_pairing(config: Configuration, G: TestFunction, geom: TorusGeometry | None = None) -> float:
    """``N**-d * sum_x G(x/N) eta(x)``."""
    geom = geom or config.geom
    return float(evaluate_on_sites(G, geom) @ config.spins) / geom.n_sites


def martingale_residual(traj: Trajectory, H: str | TestFunction, rates: RateSet | None = None) -> np.ndarray:
    """``M^H`` at the snapshot times of ``traj``.

    ``H`` is either the name of a test function tracked during the run, or a
    new callable; in the latter case the run is replayed with the same seed,
    which reproduces the trajectory exactly.
    """
    rates = rates or traj.rates
    if rates != traj.rates:
        raise ValueError("martingale residual requested for rates other than the simulated ones")
    if isinstance(H, str):
        if H not in traj.test_functions:
            raise KeyError(f"test function {H!r} was not tracked in this run")
        k = list(traj.test_functions).index(H)
        pair, integ = traj.pairings[:, k], traj.drift_integrals[:, k]
    else:
        replay = simulate(
            traj.initial, rates, traj.geom, traj.T, traj.times, traj.seed, test_functions={"H": H}
        )
        if not np.array_equal(replay.snapshots, traj.snapshots):
            raise RuntimeError("replay diverged from the recorded trajectory")
        pair, integ = replay.pairings[:, 0], replay.drift_integrals[:, 0]
    # <pi_0, H> is the pairing of the initial configuration, not the first snapshot
    h0 = empirical_pairing(traj.initial, H if callable(H) else traj.test_functions[H], traj.geom)
    return pair - h0 - integ
