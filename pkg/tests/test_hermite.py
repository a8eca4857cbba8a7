import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import hermite as nph

from fpfdecomp.exceptions import InvalidParameterError
from fpfdecomp.hermite import (MAX_DEGREE, HermiteSeries, hermite_basis, hermite_eval,
                               hermite_to_monomial, monomial_to_hermite, series_eval,
                               series_product)

finite = st.floats(-10, 10, allow_nan=False)


@pytest.mark.parametrize("k,x,expected", [(0, 3.7, 1.0), (1, 2.0, 4.0), (3, 1.0, -4.0)])
def test_hermite_eval_examples(k, x, expected):
    assert hermite_eval(k, x) == expected


def test_hermite_eval_matches_numpy():
    x = np.linspace(-3, 3, 41)
    for k in range(15):
        e = np.zeros(k + 1)
        e[k] = 1.0
        np.testing.assert_allclose(hermite_eval(k, x), nph.hermval(x, e), rtol=1e-12, atol=1e-12)


def test_hermite_eval_rejects_bad_degree():
    with pytest.raises(InvalidParameterError):
        hermite_eval(-1, 0.0)
    with pytest.raises(InvalidParameterError):
        hermite_eval(MAX_DEGREE + 1, 0.0)


@pytest.mark.parametrize("coeffs,x,expected", [
    ([1 / 40, 0, 1 / 80], 2.0, 0.2),
    ([2.5], -7.0, 2.5),
    ([0, 0.5], -3.0, -3.0),
])
def test_series_eval_examples(coeffs, x, expected):
    assert series_eval(HermiteSeries(coeffs), x) == pytest.approx(expected, abs=1e-15)


def test_series_eval_array_and_scalar_types():
    s = HermiteSeries([1.0, 2.0, 3.0])
    assert isinstance(s(0.5), float)
    out = s(np.zeros((2, 3)))
    assert out.shape == (2, 3)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=1, max_size=12), st.lists(finite, min_size=1, max_size=20))
def test_series_eval_matches_numpy(coeffs, xs):
    x = np.array(xs) / 3.0
    ref = nph.hermval(x, coeffs)
    terms = np.abs(nph.hermvander(x, len(coeffs) - 1) * np.array(coeffs))
    scale = terms.sum(axis=-1) + 1.0
    assert np.all(np.abs(series_eval(HermiteSeries(coeffs), x) - ref) <= 1e-12 * scale)


def test_basis_vector_matches_hermite_eval():
    x = np.random.default_rng(0).uniform(-3, 3, 100)
    for k in range(12):
        ref = hermite_eval(k, x)
        np.testing.assert_allclose(series_eval(HermiteSeries.basis(k), x), ref,
                                   rtol=1e-13, atol=1e-14 * (1 + np.abs(ref).max()))


def test_hermite_basis_stack():
    x = np.array([-1.0, 0.3, 2.0])
    b = hermite_basis(x, 6)
    assert b.shape == (7, 3)
    for k in range(7):
        np.testing.assert_array_equal(b[k], hermite_eval(k, x))


def test_orthogonality_gauss_hermite():
    nodes, weights = nph.hermgauss(64)
    for m in range(11):
        for n in range(11):
            val = np.sum(weights * hermite_eval(m, nodes) * hermite_eval(n, nodes))
            ref = math.sqrt(math.pi) * 2.0 ** n * math.factorial(n) if m == n else 0.0
            assert abs(val - ref) <= 1e-8 * math.sqrt(math.pi) * 2.0 ** max(m, n) \
                * math.factorial(max(m, n))


def test_derivative_identity():
    x = np.random.default_rng(1).uniform(-2, 2, 30)
    for n in range(1, 11):
        d = HermiteSeries.basis(n).derivative()
        np.testing.assert_allclose(d(x), 2 * n * hermite_eval(n - 1, x), rtol=1e-12, atol=1e-10)
    assert HermiteSeries([4.0]).derivative().coeffs == (0.0,)


def test_monomial_to_hermite_examples():
    assert monomial_to_hermite([0, 0, 0.05]).coeffs == pytest.approx((1 / 40, 0, 1 / 80))
    assert monomial_to_hermite([0, 1]).coeffs == pytest.approx((0, 0.5))
    assert monomial_to_hermite([0, 0, 0, 1]).coeffs == pytest.approx((0, 0.75, 0, 0.125))


def test_hermite_to_monomial_examples():
    np.testing.assert_allclose(hermite_to_monomial(HermiteSeries([0, 0.5])), [0, 1])
    np.testing.assert_allclose(hermite_to_monomial(HermiteSeries([1 / 40, 0, 1 / 80])),
                               [0, 0, 0.05], atol=1e-17)
    np.testing.assert_allclose(hermite_to_monomial(HermiteSeries([0, 0.75, 0, 0.125])),
                               [0, 0, 0, 1], atol=1e-15)


def test_conversions_match_numpy():
    rng = np.random.default_rng(2)
    for deg in range(13):
        m = rng.uniform(-10, 10, deg + 1)
        np.testing.assert_allclose(monomial_to_hermite(m).as_array(), nph.poly2herm(m),
                                   rtol=1e-12, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=13))
def test_round_trip(m):
    m = np.array(m)
    c = monomial_to_hermite(m).as_array()
    back = hermite_to_monomial(HermiteSeries(c))
    # the conversion is conditioned by the monomial size of each H_k
    cond = sum(abs(ck) * np.abs(nph.herm2poly(np.eye(len(c))[k])).sum() for k, ck in enumerate(c))
    assert np.all(np.abs(back - m) <= 1e-14 * (1.0 + cond + np.abs(m).max()))


def test_series_validation_and_reduction():
    with pytest.raises(InvalidParameterError):
        HermiteSeries([])
    with pytest.raises(InvalidParameterError):
        HermiteSeries([1.0, np.nan])
    with pytest.raises(InvalidParameterError):
        HermiteSeries(np.zeros(MAX_DEGREE + 2))
    s = HermiteSeries([1.0, 2.0, 0.0, 0.0])
    assert s.degree == 3
    assert s.reduced().coeffs == (1.0, 2.0)
    assert HermiteSeries([0.0, 0.0]).reduced().coeffs == (0.0,)
    r = HermiteSeries([1.0, 2.0])
    assert r.reduced() is r


def test_series_arithmetic():
    a = HermiteSeries([1.0, 2.0])
    b = HermiteSeries([0.5, 0.0, 3.0])
    assert (a + b).coeffs == (1.5, 2.0, 3.0)
    assert (2 * a).coeffs == (2.0, 4.0)
    assert (a * 0.5).coeffs == (0.5, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=8),
       st.lists(st.floats(-3, 3), min_size=1, max_size=8))
def test_series_product_pointwise(a, b):
    x = np.linspace(-2, 2, 17)
    s, t = HermiteSeries(a), HermiteSeries(b)
    prod = series_product(s, t)
    assert prod.degree == s.degree + t.degree
    ref = s(x) * t(x)
    sa = np.abs(nph.hermvander(x, len(a) - 1) * np.array(a)).sum(axis=-1)
    sb = np.abs(nph.hermvander(x, len(b) - 1) * np.array(b)).sum(axis=-1)
    scale = sa * sb * 2.0 ** min(len(a), len(b)) + 1.0
    assert np.all(np.abs(prod(x) - ref) <= 1e-11 * scale)


def test_high_degree_basis_is_finite():
    x = np.linspace(-3, 3, 11)
    assert np.all(np.isfinite(hermite_eval(100, x)))
    np.testing.assert_allclose(hermite_eval(100, x), nph.hermval(x, np.eye(101)[100]), rtol=1e-10)
