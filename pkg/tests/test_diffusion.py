import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twospecies import RateSet, make_geometry
from twospecies.diffusion import (
    DiffusionTable,
    bond_dirichlet,
    diffusion_bounds,
    diffusion_table,
    gradient_diffusion,
    gradient_dtilde,
    green_kubo_matrix,
    integrate_dtilde,
    variational_diffusion,
)
from twospecies.measures import compressibility

GRAD = RateSet(2.0, 1.0, 0.5, 2.0, 0.5)
GEN_EXCL = RateSet(1.0, 1.0, 0.0, 1.0, 1.0)


def test_closed_form_examples():
    assert GRAD.beta() == 0.25
    assert gradient_diffusion(0.4, GRAD) == pytest.approx(1.7)
    rho = np.linspace(-0.9, 0.9, 7)
    assert np.allclose(gradient_diffusion(rho, GRAD), rho / 2 + 1.5)
    sym = RateSet(1.3, 1.3, 0.2, 2.2, 0.7)
    assert np.allclose(gradient_diffusion(rho, sym), 1.3)
    assert gradient_diffusion(1.0, GRAD) == pytest.approx(GRAD.c_plus)
    assert gradient_diffusion(-1.0, GRAD) == pytest.approx(GRAD.c_minus)
    with pytest.raises(ValueError):
        gradient_diffusion(0.0, GEN_EXCL)


def test_k0_is_the_bond_dirichlet_ratio():
    for r in (GRAD, GEN_EXCL):
        for rho in (-0.5, 0.0, 0.3):
            expected = bond_dirichlet(rho, r) / compressibility(rho, r)
            assert variational_diffusion(rho, r, 0) == pytest.approx(expected, rel=1e-12)
            assert diffusion_bounds(rho, r)[1] == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("rho", [-0.8, -0.3, 0.0, 0.45, 0.9])
def test_variational_matches_closed_form_for_gradient_rates(rho):
    for k in (0, 1, 2):
        assert variational_diffusion(rho, GRAD, k) == pytest.approx(gradient_diffusion(rho, GRAD), abs=1e-8)


def test_nongradient_value_is_strictly_below_upper_bound():
    lo, hi = diffusion_bounds(0.0, GEN_EXCL)
    v = [variational_diffusion(0.0, GEN_EXCL, k) for k in (0, 1, 2)]
    assert v[0] == pytest.approx(hi)
    assert v[1] < hi - 1e-3
    assert v[0] >= v[1] >= v[2] >= lo


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(0.0, 2.0), st.floats(0.2, 3.0), st.floats(-0.95, 0.95))
def test_bounds_are_ordered(cp, cm, ce, cc, rho):
    r = RateSet(cp, cm, ce, cp + cm, cc)
    lo, hi = diffusion_bounds(rho, r)
    assert 0 < lo <= hi + 1e-12


def test_bounds_sandwich_the_closed_form():
    for rho in np.linspace(-1, 1, 41):
        lo, hi = diffusion_bounds(float(rho), GRAD)
        d = gradient_diffusion(float(rho), GRAD)
        assert lo - 1e-10 <= d <= hi + 1e-10


def test_upper_bound_boundary_limits():
    for r in (GRAD, GEN_EXCL, RateSet(1.5, 0.5, 0.3, 1.0, 2.0)):
        assert diffusion_bounds(1 - 1e-7, r)[1] == pytest.approx(r.c_plus, rel=1e-3)
        assert diffusion_bounds(-1 + 1e-7, r)[1] == pytest.approx(r.c_minus, rel=1e-3)


def test_green_kubo_is_diagonal_in_two_dimensions():
    res = green_kubo_matrix(0.0, GEN_EXCL, make_geometry(2, 3))
    for M in list(res.raw) + [res.matrix]:
        assert abs(M[0, 1]) <= 1e-8 and abs(M[1, 0]) <= 1e-8
        assert M[0, 0] == pytest.approx(M[1, 1], rel=1e-10)


def test_green_kubo_gradient_rates_reproduce_closed_form():
    res = green_kubo_matrix(0.4, GRAD, make_geometry(1, 8))
    assert res.converged
    assert abs(res.matrix[0, 0] - gradient_diffusion(0.4, GRAD)) <= 0.05


@pytest.mark.slow
def test_green_kubo_nongradient_agrees_with_variational_estimate():
    res = green_kubo_matrix(0.0, GEN_EXCL, make_geometry(1, 8))
    assert res.matrix[0, 0] == pytest.approx(variational_diffusion(0.0, GEN_EXCL, 2), abs=5e-3)


def test_integration_examples():
    grid = np.linspace(-1, 1, 201)
    ones = np.ones_like(grid)
    tab = DiffusionTable(grid, ones, ones, ones, "closed_form")
    integ = integrate_dtilde(tab)
    assert np.allclose(integ.values, grid + 1)
    assert integ.values[0] == 0.0
    lin = DiffusionTable(grid, grid / 2 + 1.5, ones, ones, "closed_form")
    assert integrate_dtilde(lin).values[100] == pytest.approx(1.25, abs=1e-12)
    with pytest.raises(ValueError):
        integrate_dtilde(integ)


def test_table_matches_gradient_antiderivative():
    grid = np.linspace(-1, 1, 401)
    tab = integrate_dtilde(diffusion_table(GRAD, grid, "closed_form"))
    assert np.allclose(tab.values, gradient_dtilde(grid, GRAD), atol=1e-5)


def test_table_validation(tmp_path):
    with pytest.raises(ValueError):
        DiffusionTable(np.array([0.0, 0.0]), np.ones(2), np.ones(2), np.ones(2), "closed_form")
    with pytest.raises(ValueError):
        diffusion_table(GRAD, [-1, 0, 1], "magic")
    tab = diffusion_table(GEN_EXCL, np.linspace(-1, 1, 5), "variational", k=1)
    path = tmp_path / "d.csv"
    tab.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "rho,d,lower,upper,method,k_or_N,lambda"
    assert len(lines) == 6
    assert np.all(tab.lower <= tab.values + 1e-10) and np.all(tab.values <= tab.upper + 1e-10)
