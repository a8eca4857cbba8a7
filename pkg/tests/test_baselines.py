import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpfdecomp.baselines import (GridGain, _affine_power, constant_gain, exact_gain_quadrature,
                                 kernel_gain, markov_matrix)
from fpfdecomp.density import ParticleEnsemble, gaussian_pdf
from fpfdecomp.exceptions import ConsistencyError, InvalidParameterError, SingularDensityError
from fpfdecomp.hermite import HermiteSeries


def bimodal(x):
    return 0.5 * gaussian_pdf(x, -1.0, 0.2) + 0.5 * gaussian_pdf(x, 1.0, 0.2)


def test_grid_gain_validation_and_interp():
    g = GridGain([0.0, 1.0, 2.0], [0.0, 2.0, 4.0])
    assert g(0.5) == 1.0
    np.testing.assert_array_equal(g(np.array([1.5, 2.0])), [3.0, 4.0])
    with pytest.raises(InvalidParameterError):
        GridGain([0.0, 0.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(InvalidParameterError):
        GridGain([0.0, 1.0], [1.0])


@pytest.mark.parametrize("m,var", [(0.0, 1.0), (1.5, 0.3), (-2.0, 0.05)])
def test_quadrature_linear_gaussian(m, var):
    grid = np.linspace(m - 12 * np.sqrt(var), m + 12 * np.sqrt(var), 801)
    gg = exact_gain_quadrature(lambda x: x, lambda x: gaussian_pdf(x, m, var), grid)
    mask = gaussian_pdf(grid, m, var) > 1e-8
    assert np.abs(gg.values[mask] - var).max() <= 1e-6


def test_quadrature_constant_h():
    grid = np.linspace(-8, 8, 400)
    gg = exact_gain_quadrature(lambda x: 3.0 + 0 * x, lambda x: gaussian_pdf(x, 0, 1), grid)
    assert np.abs(gg.values).max() <= 1e-12


def test_quadrature_bimodal_shape():
    grid = np.linspace(-7, 7, 1401)
    gg = exact_gain_quadrature(lambda x: x, bimodal, grid)
    x = np.linspace(-3, 3, 601)
    k = gg(x)
    assert np.abs(k - k[::-1]).max() <= 1e-6
    assert np.all(k > 0)
    assert k[300] == k.max()


def test_quadrature_errors():
    pdf = lambda x: gaussian_pdf(x, 0, 1)  # noqa: E731
    with pytest.raises(InvalidParameterError):
        exact_gain_quadrature(lambda x: x, pdf, np.linspace(-8, 8, 10))
    with pytest.raises(InvalidParameterError):
        exact_gain_quadrature(lambda x: x, pdf, np.linspace(-1, 1, 100))
    with pytest.raises(InvalidParameterError):
        exact_gain_quadrature(lambda x: x, pdf, np.linspace(-8, 8, 100), refine=2)
    gap = lambda x: np.where(np.abs(x) < 1, 0.0, gaussian_pdf(x, 0, 1))  # noqa: E731
    with pytest.raises(SingularDensityError):
        exact_gain_quadrature(lambda x: x, gap, np.linspace(-9, 9, 101))
    with pytest.raises(ConsistencyError):
        exact_gain_quadrature(lambda x: x, pdf, np.linspace(-9, 9, 101), total_tol=1e-30)


def test_constant_gain_examples():
    assert constant_gain(HermiteSeries([2.0]), [1.0, 5.0]) == 0.0
    assert constant_gain(HermiteSeries([0.0, 0.5]), ParticleEnsemble([-1.0, 1.0])) == 1.0
    x = np.random.default_rng(0).normal(0.7, 0.5, 200_000)
    assert constant_gain(HermiteSeries([0.0, 0.5]), x) == pytest.approx(0.25, rel=0.02)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.floats(-10, 10))
def test_constant_gain_shift_invariance_and_centring(xs, shift):
    h = HermiteSeries([0.1, -0.4, 0.3])
    x = np.array(xs)
    k = constant_gain(h, x)
    hs = HermiteSeries([0.1 + shift, -0.4, 0.3])
    assert constant_gain(hs, x) == pytest.approx(k, abs=1e-12 * (1 + abs(shift)) * 1e2)
    hx = h(x)
    centred = np.mean((hx - hx.mean()) * (x - x.mean()))
    assert k == pytest.approx(centred, abs=1e-10 * (1 + np.abs(hx).max()) * (1 + np.abs(x).max()))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=40), st.floats(0.01, 2.0))
def test_markov_matrix_row_stochastic(xs, bw):
    t = markov_matrix(np.array(xs), bw)
    assert np.all(t >= 0)
    assert np.abs(t.sum(axis=1) - 1).max() <= 1e-12


def test_markov_matrix_matches_symmetric_normalisation():
    x = np.random.default_rng(1).normal(size=12)
    bw = 0.3
    g = np.exp(-(x[:, None] - x) ** 2 / (4 * bw))
    s = np.sqrt(g.sum(axis=1))
    k = g / np.outer(s, s)
    ref = k / k.sum(axis=1)[:, None]
    np.testing.assert_allclose(markov_matrix(x, bw), ref, rtol=1e-13)


def test_affine_power():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(4, 4)) * 0.3
    r = rng.normal(size=4)
    for n in range(0, 12):
        m_ref, v_ref = np.eye(4), np.zeros(4)
        for _ in range(n):
            m_ref, v_ref = a @ m_ref, a @ v_ref + r
        m, v = _affine_power(a, r, n)
        np.testing.assert_allclose(m, m_ref, atol=1e-14)
        np.testing.assert_allclose(v, v_ref, atol=1e-13)


def test_kernel_gain_constant_h():
    res = kernel_gain(np.full(5, 2.0), [0.0, 0.1, 0.5, 0.9, 1.3], 0.1, 1e-10)
    assert res.converged
    np.testing.assert_allclose(res.gains, 0.0, atol=1e-12)


def test_kernel_gain_two_particles_symmetric():
    res = kernel_gain(np.array([-1.0, 1.0]), [-1.0, 1.0], 1.0, 1e-12, max_iter=2000)
    assert res.converged
    assert res.gains[0] == pytest.approx(res.gains[1], rel=1e-12)
    assert res.gains[0] > 0
    # 2x2 hand oracle: T = [[1-q, q], [q, 1-q]] with q = g/(1+g)
    g = np.exp(-4.0 / 4.0)
    q = g / (1 + g)
    phi = 1.0 * np.array([-1.0, 1.0]) / (2 * q)  # solves phi = T phi + bw (h - mean h)
    mean_x = np.array([(1 - q) * -1 + q * 1, q * -1 + (1 - q) * 1])
    t = np.array([[1 - q, q], [q, 1 - q]])
    ref = (t * (np.array([-1.0, 1.0])[None, :] - mean_x[:, None])) @ (phi + np.array([-1.0, 1.0]))
    np.testing.assert_allclose(res.gains, ref / 2.0, rtol=1e-9)


def test_kernel_gain_block_checks_match_plain_sweeps():
    rng = np.random.default_rng(3)
    x = rng.normal(size=20)
    hv = 0.05 * x ** 2
    a = kernel_gain(hv, x, 1.0, 1e-9, max_iter=5000)
    b = kernel_gain(hv, x, 1.0, 1e-9, max_iter=5000, check_every=7)
    assert a.converged and b.converged
    assert b.iterations >= a.iterations
    np.testing.assert_allclose(a.gains, b.gains, atol=1e-7)
    c = kernel_gain(hv, x, 0.3, 1e-30, max_iter=40)
    d = kernel_gain(hv, x, 0.3, 1e-30, max_iter=40, check_every=16)
    assert not c.converged and c.iterations == d.iterations == 40
    np.testing.assert_allclose(c.gains, d.gains, rtol=1e-12, atol=1e-14)
    assert c.residual == pytest.approx(d.residual, rel=1e-8)


def test_kernel_gain_residual_decreases():
    rng = np.random.default_rng(4)
    x = rng.normal(size=15)
    hv = x.copy()
    res = [kernel_gain(hv, x, 0.5, 1e-30, max_iter=k).residual for k in range(5, 40)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res, res[1:]))


def test_kernel_gain_nonconvergence_and_validation():
    x = np.array([0.0, 10.0, 20.0])
    res = kernel_gain(x, x, 0.1, 1e-12, max_iter=5)
    assert not res.converged and res.iterations == 5 and res.residual > 1e-12
    with pytest.raises(InvalidParameterError):
        kernel_gain([1.0], [0.0], 0.1, 1e-8)
    with pytest.raises(InvalidParameterError):
        kernel_gain([1.0, 2.0, 3.0], [0.0, 1.0], 0.1, 1e-8)
    with pytest.raises(InvalidParameterError):
        kernel_gain([1.0, 2.0], [0.0, 1.0], 0.0, 1e-8)
    with pytest.raises(InvalidParameterError):
        kernel_gain([1.0, 2.0], [0.0, 1.0], 0.1, 1e-8, check_every=0)


def test_kernel_gain_tracks_bimodal_exact_gain():
    rng = np.random.default_rng(5)
    sign = np.where(rng.random(200) < 0.5, -1.0, 1.0)
    x = sign + np.sqrt(0.2) * rng.normal(size=200)
    res = kernel_gain(x, x, 0.1, 1e-8)
    exact = exact_gain_quadrature(lambda y: y, bimodal, np.linspace(-7, 7, 1401))
    err = np.sqrt(np.mean((res.gains - exact(x)) ** 2))
    assert err < 0.5 * np.sqrt(np.mean(exact(x) ** 2))
