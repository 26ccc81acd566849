import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twospecies import RateSet
from twospecies.diffusion import DiffusionTable, diffusion_table
from twospecies.pde import (
    DensityProfile,
    interface_positions,
    make_flux,
    max_stable_dt,
    profile_from_function,
    solve,
    weak_residual,
    write_metadata,
)

CASE2 = RateSet(3.0, 1.0, 0.0, 4.0, 0.0)
CASE3 = RateSet(1.0, 1.0, 1.0, 0.0, 1.0)
GRAD = RateSet(2.0, 1.0, 0.5, 2.0, 0.5)


def heat_error(M, T=0.01):
    flux = make_flux(CASE3)
    p0 = profile_from_function(lambda u: 0.5 * np.cos(2 * np.pi * u), M)
    out = solve(p0, flux, T)
    exact = 0.5 * np.cos(2 * np.pi * p0.nodes()) * np.exp(-4 * np.pi**2 * T)
    return float(np.max(np.abs(out[-1].values - exact)))


def test_flux_examples():
    P = make_flux(CASE2)
    assert P(0.5) == pytest.approx(1.5)
    assert P(-0.5) == pytest.approx(-0.5)
    assert P(0.0) == 0.0
    assert np.all(np.diff(P(np.linspace(-1, 1, 50))) > 0)
    assert make_flux(CASE3)(0.3) == pytest.approx(0.3)
    grid = np.linspace(-1, 1, 101)
    ones = np.ones_like(grid)
    phi = make_flux(GRAD, DiffusionTable(grid, ones, ones, ones, "variational", 1))
    assert phi(np.array([-1.0, 0.0, 0.7])) == pytest.approx([0.0, 1.0, 1.7])
    closed = make_flux(GRAD, diffusion_table(GRAD, grid))
    assert closed(np.array([-1.0, 0.0, 1.0])) == pytest.approx([0.0, 1.25, 3.0])
    with pytest.raises(ValueError):
        make_flux(GRAD)
    with pytest.raises(ValueError):
        make_flux(RateSet(1.0, 1.0, 0.0, 0.0, 1.0))


def test_constant_profile_is_stationary():
    p0 = profile_from_function(lambda u: np.full_like(u, 0.3), 32)
    out = solve(p0, make_flux(CASE2), 0.1, snapshot_times=[0, 0.05, 0.1])
    assert all(np.allclose(s.values, 0.3, atol=1e-14) for s in out)


def test_heat_solution_accuracy_and_order():
    assert heat_error(256) <= 1e-3
    errs = [heat_error(M) for M in (64, 128, 256)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


@settings(max_examples=20, deadline=None)
@given(st.integers(8, 40), st.floats(0.0, 0.05), st.integers(0, 2**31 - 1))
def test_mass_and_maximum_principle(M, T, seed):
    rng = np.random.default_rng(seed)
    p0 = DensityProfile(rng.uniform(-1, 1, M))
    out = solve(p0, make_flux(CASE2), T)[-1]
    assert out.mass() == pytest.approx(p0.mass(), abs=1e-12)
    assert out.values.max() <= p0.values.max() + 1e-12
    assert out.values.min() >= p0.values.min() - 1e-12


def test_two_dimensional_solver_conserves_mass():
    p0 = profile_from_function(lambda x, y: 0.5 * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y), 16, d=2)
    out = solve(p0, make_flux(CASE3), 0.01)[-1]
    assert out.mass() == pytest.approx(p0.mass(), abs=1e-14)
    exact = p0.values * np.exp(-8 * np.pi**2 * 0.01)
    assert np.max(np.abs(out.values - exact)) < 5e-3


def test_solver_validation():
    p0 = profile_from_function(lambda u: 0.5 * np.cos(2 * np.pi * u), 16)
    flux = make_flux(CASE3)
    with pytest.raises(ValueError):
        solve(p0, flux, 0.1, dt=2 * max_stable_dt(16, 1, flux.lipschitz))
    with pytest.raises(ValueError):
        solve(DensityProfile(np.full(16, 1.5)), flux, 0.1)
    with pytest.raises(ValueError):
        solve(p0, flux, 0.1, snapshot_times=[0.05, 0.01])


def test_weak_residual():
    flux = make_flux(CASE3)
    p0 = profile_from_function(lambda u: 0.5 * np.cos(2 * np.pi * u), 256)
    snaps = solve(p0, flux, 0.05, snapshot_times=np.linspace(0, 0.05, 501))
    one = weak_residual(snaps, flux, lambda u: np.ones_like(u), lambda u: np.zeros_like(u))
    assert one <= 1e-12
    c = weak_residual(snaps, flux, lambda u: np.cos(2 * np.pi * u), lambda u: -4 * np.pi**2 * np.cos(2 * np.pi * u))
    assert c <= 1e-3
    assert weak_residual(snaps[:1], flux, lambda u: np.cos(u), lambda u: -np.cos(u)) == 0.0


def test_stefan_interfaces_move_monotonically():
    flux = make_flux(CASE2)
    p0 = profile_from_function(lambda u: np.where(u < 0.5, 0.5, -0.5), 128)
    snaps = solve(p0, flux, 0.05, snapshot_times=np.linspace(0, 0.05, 26))
    inner = []
    for s in snaps:
        x = interface_positions(s)
        assert x.size == 2
        inner.append(x[(x > 0.25) & (x < 0.75)][0])
    steps = np.diff(inner)
    assert np.all(steps >= -1e-12)  # the faster-diffusing + phase invades the - phase
    assert inner[-1] > inner[0]


def test_interface_positions_of_sine():
    p = profile_from_function(lambda u: np.sin(2 * np.pi * (u - 0.1)), 200)
    assert interface_positions(p) == pytest.approx([0.1, 0.6], abs=1e-4)


def test_metadata(tmp_path):
    path = tmp_path / "meta.json"
    write_metadata(path, make_flux(CASE2), 64, 1, 1e-5, 0.05)
    meta = json.loads(path.read_text())
    assert meta["case"] == "Case2"
    assert meta["grid"] == {"M": 64, "d": 1}
