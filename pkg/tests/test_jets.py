import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given, settings, strategies as st

from uedalab.jets import JetError, LaurentPoly, LaurentRangeError, SplitFunction, WJet

coef = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)


def laurent(draw_terms):
    return LaurentPoly.from_dict(draw_terms)


terms = st.dictionaries(st.integers(-4, 4), coef, max_size=5)


@settings(max_examples=50, deadline=None)
@given(terms, terms)
def test_laurent_product_matches_evaluation(a, b):
    p, q = LaurentPoly.from_dict(a), LaurentPoly.from_dict(b)
    for z in (0.7 + 0.2j, -1.3j, 1.1):
        assert abs((p * q)(z) - p(z) * q(z)) <= 1e-10 * (1 + abs(p(z)) * abs(q(z)))


@settings(max_examples=50, deadline=None)
@given(terms)
def test_laurent_derivative_matches_difference(a):
    p = LaurentPoly.from_dict(a)
    z, h = 0.9 + 0.3j, 1e-6
    fd = (p(z + h) - p(z - h)) / (2 * h)
    assert abs(p.derivative()(z) - fd) <= 1e-5 * (1 + abs(fd))


def test_laurent_ipow_negative():
    p = LaurentPoly.monomial(2.0, 3)
    q = p.ipow(-2)
    assert q.as_dict() == {-6: 0.25}


def test_laurent_range_guard():
    with pytest.raises(LaurentRangeError):
        LaurentPoly.monomial(1.0, 10, d_max=4)


def test_jet_identity_compose():
    f = WJet.from_list([0, 1, LaurentPoly.from_dict({1: 0.5}), 0.25], 3)
    ident = WJet.identity(3)
    assert f.compose(ident).equals(f, 1e-15)
    assert ident.compose(f).equals(f, 1e-15)


def test_jet_inverse_round_trip():
    f = WJet.from_list([0, 2.0, LaurentPoly.from_dict({-1: 0.3, 2: 0.1}), 0.7, -0.2], 4)
    g = f.inverse()
    assert f.compose(g).equals(WJet.identity(4), 1e-12)
    assert g.compose(f).equals(WJet.identity(4), 1e-12)


def test_jet_inverse_needs_linear_term():
    with pytest.raises(JetError):
        WJet.from_list([0, 0, 1.0], 2).inverse()


def test_jet_power_matches_binomial_series():
    u = WJet.from_list([1, 0.3], 6)
    half = u.power(Fraction(1, 2))
    z, w = 0.5, 0.2
    assert abs(half(z, w) - np.sqrt(1 + 0.3 * w)) < 1e-7
    assert (half * half).equals(u, 1e-14)


def test_jet_reciprocal():
    u = WJet.from_list([2.0, 1.0, 0.5], 5)
    assert (u * u.reciprocal()).equals(WJet.constant(1.0, 5), 1e-14)


def test_split_function_branches():
    g = SplitFunction(1.0, (2.0,), (0.0, 3.0))
    assert g.branch("x").as_dict() == {0: 1.0, 1: 2.0}
    assert g.branch("y").as_dict() == {0: 1.0, 2: 3.0}
    assert abs(g(0.1, 0.2) - (1 + 0.2 + 3 * 0.04)) < 1e-15


def test_jet_json_round_trip():
    f = WJet.from_list([0, 1, LaurentPoly.from_dict({-2: 1 + 1j, 3: 0.5})], 2, annulus=(0.5, 2.0))
    g = WJet.from_json(f.to_json())
    assert g.equals(f, 0.0) and g.annulus == f.annulus
