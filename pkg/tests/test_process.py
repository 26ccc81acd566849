import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twospecies import CaseTag, Configuration, RateSet, classify_case, make_geometry
from twospecies.measures import marginals
from twospecies.process import (
    GradientConditionWarning,
    current,
    current_pair,
    flux_h,
    generator_apply,
    pair_move,
    pair_rate,
)

SPINS = (-1, 0, 1)
rate = st.floats(0.05, 5.0, allow_nan=False)


@st.composite
def rate_sets(draw, case=None):
    cp, cm, ce = draw(rate), draw(rate), draw(st.one_of(st.just(0.0), rate))
    ca, cc = draw(rate), draw(rate)
    if case == "case2":
        cc = 0.0
    if case == "case3":
        ca = 0.0
    return RateSet(cp, cm, ce, ca, cc)


@st.composite
def gradient_rate_sets(draw):
    ce = draw(st.floats(0.0, 2.0))
    ca = draw(st.floats(0.1, 3.0))
    cp = draw(st.floats(0.05, 0.95)) * (ca + 2 * ce)
    return RateSet(cp, ca + 2 * ce - cp, ce, ca, draw(rate))


@pytest.mark.parametrize(
    "rates,case",
    [((1, 1, 0, 1, 1), CaseTag.CASE1), ((3, 1, 0, 4, 0), CaseTag.CASE2), ((1, 1, 1, 0, 1), CaseTag.CASE3)],
)
def test_classify(rates, case):
    assert classify_case(RateSet.from_sequence(rates)) is case
    assert str(case).startswith("Case")


@pytest.mark.parametrize("bad", [(0, 1, 1, 1, 1), (1, 0, 1, 1, 1), (1, 1, -1, 1, 1), (1, 1, 1, 0, 0)])
def test_invalid_rates(bad):
    with pytest.raises(ValueError):
        RateSet.from_sequence(bad)


def test_pair_rates_and_moves():
    r = RateSet(2.0, 3.0, 5.0, 7.0, 11.0)
    assert pair_rate(1, 0, r) == 2.0
    assert pair_rate(1, 1, r) == 0.0
    assert pair_rate(0, 0, r) == 11.0
    assert pair_move(1, -1) == (0, 0)
    assert pair_move(0, 0) == (-1, 1)
    assert pair_move(1, 0) == (0, 1)
    active = {(a, b) for a in SPINS for b in SPINS if pair_rate(a, b, r) > 0}
    assert active == {(1, 0), (0, -1), (-1, 1), (1, -1), (0, 0)}


def test_generator_examples():
    r = RateSet(1.0, 1.0, 0.5, 2.0, 0.7)
    g = make_geometry(1, 2)
    eta = Configuration(np.array([1, -1]), g)
    f = lambda c: float(np.array_equal(c.spins, [0, 0]))
    assert generator_apply(f, eta, r) == pytest.approx(2 * r.c_annihilate)
    assert generator_apply(lambda c: 3.0, eta, r) == 0.0


@settings(max_examples=40)
@given(rate_sets(), st.integers(2, 6), st.data())
def test_generator_conserves_charge(rates, N, data):
    g = make_geometry(1, N)
    spins = np.array(data.draw(st.lists(st.sampled_from(SPINS), min_size=N, max_size=N)))
    eta = Configuration(spins, g)
    assert abs(generator_apply(lambda c: float(c.charge), eta, rates)) < 1e-12


@given(st.lists(st.sampled_from(SPINS), min_size=1, max_size=12))
def test_configuration_roundtrip(spins):
    g = make_geometry(1, max(2, len(spins))) if len(spins) >= 2 else make_geometry(1, 2)
    spins = (spins * 2)[: g.n_sites]
    c = Configuration(np.array(spins), g)
    assert Configuration.from_line(c.to_line(), g) == c
    assert c.charge == sum(spins)


def test_configuration_validation():
    g = make_geometry(1, 3)
    with pytest.raises(ValueError):
        Configuration(np.array([0, 2, 0]), g)
    with pytest.raises(ValueError):
        Configuration(np.array([0, 1]), g)
    with pytest.raises(ValueError):
        Configuration(np.array([0, 1, 0]), g, charge=3)


def test_current_examples():
    r = RateSet(2.0, 3.0, 5.0, 7.0, 11.0)
    assert current_pair(1, 0, r) == 2.0
    assert current_pair(1, -1, r) == 7.0 + 10.0
    assert current_pair(0, 1, r) == -2.0
    c = Configuration(np.array([1, 0, 0]), make_geometry(1, 3))
    assert current(c, 0, 1, r) == 2.0


@given(rate_sets())
def test_current_antisymmetric(r):
    for a, b in itertools.product(SPINS, SPINS):
        assert current_pair(a, b, r) == -current_pair(b, a, r)


def test_flux_examples():
    r = RateSet(3.0, 1.0, 0.0, 4.0, 0.0)
    assert flux_h(1, r) == 3.0
    assert flux_h(0, r) == 0.0
    assert flux_h(-1, r) == -1.0
    with pytest.warns(GradientConditionWarning):
        flux_h(1, RateSet(1, 1, 0, 1, 1))


@given(gradient_rate_sets())
def test_gradient_identity(r):
    assert r.is_gradient(1e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for a, b in itertools.product(SPINS, SPINS):
            assert abs(current_pair(a, b, r) - (flux_h(a, r) - flux_h(b, r))) < 1e-9


@settings(max_examples=40)
@given(rate_sets(), st.floats(-0.95, 0.95))
def test_detailed_balance_per_bond(r, rho):
    p = marginals(rho, r).as_array()
    for a, b in itertools.product(SPINS, SPINS):
        c = pair_rate(a, b, r)
        if c == 0:
            continue
        a2, b2 = pair_move(a, b)
        # the reverse jump happens across the reversed bond
        back = pair_rate(b2, a2, r)
        assert pair_move(b2, a2) == (b, a)
        lhs = p[a + 1] * p[b + 1] * c
        rhs = p[a2 + 1] * p[b2 + 1] * back
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, lhs)


def test_swapped_rates_mirror_the_process():
    r = RateSet(2.0, 3.0, 5.0, 7.0, 11.0)
    s = r.swapped()
    for a, b in itertools.product(SPINS, SPINS):
        assert pair_rate(a, b, r) == pair_rate(-b, -a, s)
