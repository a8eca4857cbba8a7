import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpfdecomp.density import (MixtureDensity, ParticleEnsemble, component_expectations,
                               ensemble_moments, erf, erfc, erfcx, gaussian_hermite_moments,
                               gaussian_pdf, gaussian_raw_moments, hbar, mixture_pdf)
from fpfdecomp.exceptions import InvalidParameterError
from fpfdecomp.hermite import HermiteSeries, monomial_to_hermite


def test_gaussian_pdf_examples():
    assert gaussian_pdf(0.0, 0.0, 1.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert gaussian_pdf(0.7, 0.7, 0.3) == pytest.approx((2 * math.pi * 0.3) ** -0.5, rel=1e-15)
    assert gaussian_pdf(1.0, 0.0, 0.2) == pytest.approx(0.07322491280963243, abs=1e-10)
    with pytest.raises(InvalidParameterError):
        gaussian_pdf(0.0, 0.0, 0.0)


def test_mixture_pdf_examples():
    d = MixtureDensity(ParticleEnsemble([0.0]), 1.0)
    assert mixture_pdf(d, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    d2 = MixtureDensity(ParticleEnsemble([-1.0, 1.0]), 0.2)
    assert d2.pdf(0.0) == pytest.approx(gaussian_pdf(0.0, 1.0, 0.2), rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20), st.floats(0.001, 2.0))
def test_mixture_normalization(xs, eps):
    d = MixtureDensity(ParticleEnsemble(xs), eps)
    lo, hi = d.support()
    grid = np.linspace(lo, hi, 20001)
    assert np.trapezoid(d.pdf(grid), grid) == pytest.approx(1.0, abs=1e-8)


def test_ensemble_validation():
    with pytest.raises(InvalidParameterError):
        ParticleEnsemble([])
    with pytest.raises(InvalidParameterError):
        ParticleEnsemble([0.0, np.inf])
    with pytest.raises(InvalidParameterError):
        MixtureDensity(ParticleEnsemble([0.0]), 0.0)
    e = ParticleEnsemble([1.0, 2.0])
    assert len(e) == e.count == 2
    with pytest.raises(ValueError):
        e.positions[0] = 5.0


def test_erf_examples():
    assert erf(0.0) == 0.0
    assert erf(np.inf) == 1.0
    assert erf(-np.inf) == -1.0
    assert erf(1.0) == pytest.approx(0.8427007929497149, abs=1e-15)
    assert np.isnan(erf(np.nan))


def test_erf_against_mpmath():
    x = np.concatenate([np.linspace(-8, 8, 4001), [1e-300, -1e-12, 6.4999999, 6.5, 27.0]])
    ref = np.array([float(mpmath.erf(mpmath.mpf(float(v)))) for v in x])
    assert np.abs(erf(x) - ref).max() <= 5e-15


def test_erf_shape_properties():
    x = np.linspace(-7, 7, 1000)
    y = erf(x)
    assert np.all(np.diff(y) >= 0)
    np.testing.assert_array_equal(erf(-x), -y)
    assert np.all(np.abs(y) <= 1.0)
    assert erf(np.zeros((3, 2))).shape == (3, 2)


def test_erfc_and_erfcx():
    x = np.array([0.0, 0.5, 1.5, 2.0, 5.0, 10.0, 26.0])
    ref_c = np.array([float(mpmath.erfc(v)) for v in x])
    np.testing.assert_allclose(erfc(x), ref_c, rtol=1e-13)
    ref_cx = np.array([float(mpmath.exp(mpmath.mpf(v) ** 2) * mpmath.erfc(v)) for v in x])
    np.testing.assert_allclose(erfcx(x), ref_cx, rtol=1e-13)
    with pytest.raises(InvalidParameterError):
        erfcx(-1.0)


def test_raw_and_hermite_moments_against_quadrature():
    nodes, w = np.polynomial.hermite_e.hermegauss(60)
    w = w / w.sum()
    for m, v in [(0.3, 0.2), (-1.5, 1.0), (2.0, 0.01)]:
        y = m + math.sqrt(v) * nodes
        raw = gaussian_raw_moments(m, v, 8)
        herm = gaussian_hermite_moments(m, v, 8)
        for k in range(9):
            e = np.zeros(k + 1)
            e[k] = 1
            assert raw[k] == pytest.approx(np.sum(w * y ** k), rel=1e-11, abs=1e-12)
            assert herm[k] == pytest.approx(np.sum(w * np.polynomial.hermite.hermval(y, e)),
                                            rel=1e-10, abs=1e-9)


def test_hbar_examples():
    x = np.array([-0.4, 0.1, 1.3])
    d = MixtureDensity(ParticleEnsemble(x), 0.3)
    assert hbar(HermiteSeries([2.5]), d) == pytest.approx(2.5)
    assert hbar(HermiteSeries([0, 0.5]), d) == pytest.approx(x.mean(), rel=1e-15)
    h = monomial_to_hermite([0, 0, 0.05])
    assert hbar(h, d) == pytest.approx(0.05 * np.mean(x ** 2 + 0.3), rel=1e-14)


def test_hbar_methods_agree_and_linear():
    rng = np.random.default_rng(3)
    d = MixtureDensity(ParticleEnsemble(rng.normal(size=10)), 0.4)
    h1 = HermiteSeries(rng.normal(size=6))
    h2 = HermiteSeries(rng.normal(size=4))
    assert hbar(h1, d, "monomial") == pytest.approx(hbar(h1, d), rel=1e-12)
    assert hbar(2.0 * h1 + (-3.0) * h2, d) == pytest.approx(
        2.0 * hbar(h1, d) - 3.0 * hbar(h2, d), rel=1e-12)
    with pytest.raises(InvalidParameterError):
        component_expectations(h1, d, method="quadrature")


def test_hbar_small_bandwidth_limit():
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, 7)
    d = MixtureDensity(ParticleEnsemble(x), 1e-8)
    for deg in range(5):
        h = HermiteSeries(rng.normal(size=deg + 1))
        emp = np.mean(h(x))
        assert hbar(h, d) == pytest.approx(emp, rel=1e-6, abs=1e-12)


def test_ensemble_moments():
    assert ensemble_moments([3.0]) == (3.0, 0.0)
    assert ensemble_moments([-1.0, 1.0]) == (0.0, 1.0)
    m, v = ensemble_moments([1.0, 2.0, 3.0])
    assert m == 2.0
    assert v == pytest.approx(2 / 3)
