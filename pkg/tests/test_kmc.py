import numpy as np
import pytest

from twospecies import Configuration, RateSet, make_geometry
from twospecies.kmc import (
    EventBudgetExceeded,
    block_average,
    block_field,
    empirical_field,
    empirical_pairing,
    martingale_residual,
    simulate,
    simulate_ensemble,
    sub_seed,
)
from twospecies.measures import canonical_enumerate, compressibility, sample_grand

GRAD = RateSet(2.0, 1.0, 0.5, 2.0, 0.5)
ONE = RateSet(1.0, 1.0, 1.0, 1.0, 1.0)
CASE2 = RateSet(3.0, 1.0, 0.0, 4.0, 0.0)


def cos_profile(u):
    return 0.5 * np.cos(2 * np.pi * u)


def test_absorbing_configuration_is_frozen():
    g = make_geometry(1, 16)
    init = Configuration(np.ones(16, dtype=np.int8), g)
    tr = simulate(init, CASE2, g, 1.0, [0.0, 0.5, 1.0], seed=1)
    assert tr.event_count == 0
    assert np.all(tr.snapshots == 1)


def test_charge_is_conserved_and_runs_reproduce():
    g = make_geometry(1, 32)
    init = sample_grand(0.2, ONE, g, 9)
    a = simulate(init, ONE, g, 0.2, np.linspace(0, 0.2, 5), seed=11)
    b = simulate(init, ONE, g, 0.2, np.linspace(0, 0.2, 5), seed=11)
    assert np.array_equal(a.snapshots, b.snapshots)
    assert a.event_count == b.event_count > 0
    assert np.all(a.snapshots.sum(axis=1) == init.charge)
    assert np.array_equal(a.snapshots[0], init.spins)


def test_two_dimensional_run_conserves_charge():
    g = make_geometry(2, 8)
    init = sample_grand(0.0, ONE, g, 2)
    tr = simulate(init, ONE, g, 0.05, [0.05], seed=3)
    assert tr.snapshots[-1].sum() == init.charge


def test_snapshot_validation():
    g = make_geometry(1, 8)
    init = sample_grand(0.0, ONE, g, 0)
    with pytest.raises(ValueError):
        simulate(init, ONE, g, 1.0, [0.5, 0.2], seed=0)
    with pytest.raises(ValueError):
        simulate(init, ONE, g, 1.0, [2.0], seed=0)
    with pytest.raises(ValueError):
        simulate(init, ONE, g, 1.0, [1.0], seed=2**40)


def test_event_budget():
    g = make_geometry(1, 64)
    init = sample_grand(0.0, ONE, g, 0)
    with pytest.raises(EventBudgetExceeded):
        simulate(init, ONE, g, 1.0, [1.0], seed=0, max_events=100)


def test_long_run_samples_the_canonical_measure():
    """Occupation frequencies of a 3-site torus against exact enumeration."""
    g = make_geometry(1, 3)
    init = Configuration(np.array([0, 0, 0]), g)
    times = np.linspace(0, 400.0, 20_001)
    tr = simulate(init, ONE, g, 400.0, times, seed=17)
    ens = canonical_enumerate(3, 0, ONE)
    codes = (tr.snapshots.astype(np.int64) + 1) @ np.array([9, 3, 1])
    for state, code, p in zip(ens.states, ens.codes, ens.weights):
        freq = np.mean(codes == code)
        assert abs(freq - p) < 0.02, (state, freq, p)


def test_sub_seeds_are_distinct_and_stable():
    seeds = [sub_seed(7, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [sub_seed(7, i) for i in range(100)]
    assert all(0 <= s < 2**32 for s in seeds)


def test_threaded_ensemble_matches_serial():
    g = make_geometry(1, 32)
    make = lambda s: sample_grand(0.0, ONE, g, s)
    a = simulate_ensemble(make, ONE, g, 0.05, [0.05], 5, 4, threads=1)
    b = simulate_ensemble(make, ONE, g, 0.05, [0.05], 5, 4, threads=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.snapshots, y.snapshots)


def test_block_average_examples():
    g = make_geometry(1, 8)
    eta = Configuration(np.array([1, -1, 0, 0, 0, 0, 0, 1]), g)
    assert block_average(eta, 1, 0) == -1
    assert block_average(eta, 1, 1) == pytest.approx(0.0)
    plus = Configuration(np.ones(8, dtype=np.int8), g)
    assert all(block_average(plus, x, l) == 1.0 for x in range(8) for l in (0, 1, 2, 3))
    fld = block_field(eta.spins, g, 1)
    assert fld == pytest.approx([block_average(eta, x, 1) for x in range(8)])
    with pytest.raises(ValueError):
        block_field(eta.spins, g, 4)


def test_block_field_2d_matches_direct_average():
    g = make_geometry(2, 7)
    eta = sample_grand(0.1, ONE, g, 4)
    fld = empirical_field(eta, 2).values
    assert fld == pytest.approx([block_average(eta, x, 2) for x in range(g.n_sites)])


def test_pairing_examples():
    g = make_geometry(1, 10)
    eta = sample_grand(0.0, ONE, g, 1)
    assert empirical_pairing(eta, lambda u: np.ones_like(u)) == pytest.approx(eta.charge / 10)
    zero = Configuration(np.zeros(10, dtype=np.int8), g)
    assert empirical_pairing(zero, lambda u: np.cos(u)) == 0.0
    big = make_geometry(1, 10_000)
    eta = sample_grand(0.0, ONE, big, 8)
    G = lambda u: np.cos(2 * np.pi * u)
    se = np.sqrt(compressibility(0.0, ONE) * 0.5 / big.n_sites)
    assert abs(empirical_pairing(eta, G)) <= 4 * se


def _martingale_runs(N, seeds=20, T=0.01):
    g = make_geometry(1, N)
    H = {"sin": lambda u: np.sin(2 * np.pi * u), "one": lambda u: np.ones_like(u)}
    times = np.linspace(0, T, 11)
    out = []
    for i in range(seeds):
        s = sub_seed(123, i)
        init = sample_grand(0.0, GRAD, g, s)
        tr = simulate(init, GRAD, g, T, times, sub_seed(s, 1), test_functions=H)
        out.append(tr)
    return out


def test_martingale_basic_properties():
    (tr,) = _martingale_runs(32, seeds=1)
    assert np.all(np.abs(martingale_residual(tr, "one")) < 1e-12)
    m = martingale_residual(tr, "sin")
    assert m[0] == pytest.approx(0.0, abs=1e-14)
    replay = martingale_residual(tr, lambda u: np.sin(2 * np.pi * u))
    assert np.allclose(replay, m, atol=1e-12)
    with pytest.raises(KeyError):
        martingale_residual(tr, "cos")


@pytest.mark.slow
def test_martingale_shrinks_with_N():
    sup = {}
    final = {}
    for N in (64, 256):
        runs = _martingale_runs(N)
        ms = np.array([martingale_residual(tr, "sin") for tr in runs])
        sup[N] = np.abs(ms).max()
        final[N] = ms[:, -1]
    assert sup[256] < sup[64]
    # centred: the ensemble mean sits within 4 standard errors of zero
    for N, v in final.items():
        assert abs(v.mean()) <= 4 * v.std(ddof=1) / np.sqrt(v.size) + 1e-12
