"""Gaussian-mixture particle densities, Gaussian moments and the error function.

The error function is computed in-library. Table nodes are filled once by a
positive-term series; between nodes a short Taylor expansion is used whose
coefficients follow from ``d^n/dx^n erf(x) = 2/sqrt(pi) (-1)^(n-1) H_{n-1}(x) e^{-x^2}``.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .exceptions import InvalidParameterError
from .hermite import HermiteSeries, hermite_to_monomial

SQRT_PI = np.sqrt(np.pi)
_TWO_OVER_SQRT_PI = 2.0 / SQRT_PI

# erf(x) == 1 in double precision beyond this point (erfc(6.5) ~ 4e-20)
ERF_SATURATION = 6.5


def _erf_series(x):
    """erf on [0, ERF_SATURATION] from ``e^{-x^2} sum 2^n x^(2n+1) / (2n+1)!!``.

    All terms are positive, so there is no cancellation; the term count is
    chosen for the largest argument.
    """
    x = np.asarray(x, dtype=float)
    x2 = x * x
    term = x.copy()
    total = x.copy()
    for n in range(1, 400):
        term = term * 2.0 * x2 / (2 * n + 1)
        total = total + term
        if np.all(term <= 1e-18 * total):
            break
    return _TWO_OVER_SQRT_PI * np.exp(-x2) * total


def _erfc_tail(x, depth=200):
    """erfc from the continued fraction, valid for ``x >= 1`` (smaller inputs are clipped)."""
    x = np.maximum(np.asarray(x, dtype=float), 1.0)
    f = x.copy()
    for k in range(depth, 0, -1):
        f = x + (0.5 * k) / f
    return np.exp(-x * x) / (SQRT_PI * f)


_STEP = 1.0 / 128.0
_ORDER = 5
# nodes from here on store erf - 1 so the final rounding of 1 + (...) is monotone
_COMPLEMENT_FROM = 2.0
# adding 1.5 * 2**52 rounds to an integer held in the low mantissa bits
_ROUND = 6755399441055744.0


def _build_table():
    nodes = np.arange(0.0, ERF_SATURATION + _STEP, _STEP)
    herm = np.empty((_ORDER, nodes.size))
    herm[0] = 1.0
    herm[1] = 2.0 * nodes
    for n in range(1, _ORDER - 1):
        herm[n + 1] = 2.0 * nodes * herm[n] - 2.0 * n * herm[n - 1]
    gauss = np.exp(-nodes * nodes)
    base = (nodes >= _COMPLEMENT_FROM - 0.5 * _STEP).astype(float)
    # erf - 1 = -erfc is summed directly where it is small, avoiding cancellation
    cols = [np.where(base > 0, -_erfc_tail(nodes), _erf_series(nodes)), base]
    for n in range(1, _ORDER + 1):
        sign = 1.0 if n % 2 else -1.0
        cols.append(_TWO_OVER_SQRT_PI * sign * herm[n - 1] * gauss / factorial(n))
    return np.column_stack(cols)


# row j: [erf(x_j) - base_j, base_j, Taylor coefficients 1..order] at x_j = j * _STEP
_ERF_TAYLOR = _build_table()


def erf(x):
    """Error function ``2/sqrt(pi) * int_0^x exp(-t^2) dt``.

    Accurate to a few units of 1e-15 absolute on the whole real line; ``+-inf`` map to
    ``+-1`` and NaN propagates.
    """
    xa = np.asarray(x, dtype=float)
    a = np.abs(xa)
    c = np.fmin(a, ERF_SATURATION)
    jf = c * (1.0 / _STEP) + _ROUND
    j = jf.view(np.int64) & 0xFFFFFFFF
    d = c - (jf - _ROUND) * _STEP
    t = _ERF_TAYLOR.take(j, axis=0)
    r = t[..., _ORDER + 1] * d
    for k in range(_ORDER, 1, -1):
        r += t[..., k]
        r *= d
    r += t[..., 0]
    r += t[..., 1]
    if not (a < ERF_SATURATION).all():
        r = np.where(a >= ERF_SATURATION, 1.0, r)
        r = np.where(np.isnan(xa), np.nan, r)
    out = np.copysign(r, xa)
    return float(out) if np.ndim(x) == 0 else out


def _erfcx_cf(x, depth=80):
    # erfc(x) e^{x^2} = (1/sqrt(pi)) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    f = x.copy()
    for k in range(depth, 0, -1):
        f = x + (0.5 * k) / f
    return 1.0 / (SQRT_PI * f)


def erfc(x):
    """Complementary error function ``1 - erf(x)`` without cancellation for large x."""
    xa = np.asarray(x, dtype=float)
    out = 1.0 - erf(xa)
    big = xa > 1.5
    if np.any(big):
        xb = xa[big]
        with np.errstate(under="ignore"):
            out = np.where(big, 0.0, out)
            out[big] = _erfcx_cf(xb) * np.exp(-xb * xb)
    return float(out) if np.ndim(x) == 0 else out


def erfcx(x):
    """Scaled complementary error function ``exp(x^2) erfc(x)`` for ``x >= 0``."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise InvalidParameterError("erfcx is only provided for non-negative arguments")
    out = np.empty_like(xa)
    small = xa <= 1.5
    xs = xa[small]
    out[small] = np.exp(xs * xs) * (1.0 - erf(xs))
    out[~small] = _erfcx_cf(xa[~small])
    return float(out) if np.ndim(x) == 0 else out


def gaussian_pdf(x, mean, variance):
    """Normal density ``N(x; mean, variance)``."""
    if np.any(np.asarray(variance) <= 0):
        raise InvalidParameterError(f"variance must be positive, got {variance}")
    d = np.asarray(x, dtype=float) - mean
    out = np.exp(-d * d / (2.0 * variance)) / np.sqrt(2.0 * np.pi * variance)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ParticleEnsemble:
    """Particle positions ``X^1 .. X^Np`` (scalar state)."""

    positions: np.ndarray

    def __post_init__(self):
        p = np.array(self.positions, dtype=float).reshape(-1)
        if p.size == 0:
            raise InvalidParameterError("an ensemble needs at least one particle")
        if not np.all(np.isfinite(p)):
            raise InvalidParameterError("particle positions must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def count(self):
        return self.positions.size

    def __len__(self):
        return self.positions.size


def as_ensemble(e):
    return e if isinstance(e, ParticleEnsemble) else ParticleEnsemble(e)


@dataclass(frozen=True)
class MixtureDensity:
    """Equal-weight Gaussian mixture with one component of variance
    ``bandwidth`` centred on each particle."""

    ensemble: ParticleEnsemble
    bandwidth: float

    def __post_init__(self):
        object.__setattr__(self, "ensemble", as_ensemble(self.ensemble))
        if not self.bandwidth > 0:
            raise InvalidParameterError(f"bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def positions(self):
        return self.ensemble.positions

    def pdf(self, x):
        return mixture_pdf(self, x)

    def support(self, width=10.0):
        """Interval holding all but a negligible part of the mass."""
        s = width * np.sqrt(self.bandwidth)
        return self.positions.min() - s, self.positions.max() + s


def mixture_pdf(d, x):
    """``(1/Np) sum_i N(x; X^i, eps)``."""
    xa = np.asarray(x, dtype=float)
    diff = xa[..., None] - d.positions
    vals = np.exp(-diff * diff / (2.0 * d.bandwidth)).mean(axis=-1)
    out = vals / np.sqrt(2.0 * np.pi * d.bandwidth)
    return float(out) if np.ndim(x) == 0 else out


def gaussian_raw_moments(mean, variance, order):
    """Raw moments ``E[Y^k]``, ``k = 0..order``, of ``Y ~ N(mean, variance)``.

    Uses ``M_k = m M_{k-1} + (k-1) v M_{k-2}``. ``mean`` may be an array, in
    which case the result has shape ``(order + 1,) + mean.shape``.
    """
    m = np.asarray(mean, dtype=float)
    out = np.empty((order + 1,) + m.shape)
    out[0] = 1.0
    if order >= 1:
        out[1] = m
    for k in range(2, order + 1):
        out[k] = m * out[k - 1] + (k - 1) * variance * out[k - 2]
    return out


def gaussian_hermite_moments(mean, variance, order):
    """``E[H_k(Y)]``, ``k = 0..order``, for ``Y ~ N(mean, variance)``.

    From the generating function ``E[exp(2tY - t^2)] = exp(2mt - (1 - 2v) t^2)``
    these obey ``M_{k+1} = 2m M_k - 2k (1 - 2v) M_{k-1}``.
    """
    m = np.asarray(mean, dtype=float)
    out = np.empty((order + 1,) + m.shape)
    out[0] = 1.0
    if order >= 1:
        out[1] = 2.0 * m
    damp = 1.0 - 2.0 * variance
    for k in range(1, order):
        out[k + 1] = 2.0 * m * out[k] - 2.0 * k * damp * out[k - 1]
    return out


def component_expectations(h, d, method="hermite"):
    """Per-particle expectations ``E_{N(X^i, eps)}[h]``.

    ``method="hermite"`` works directly in the Hermite basis and stays
    well conditioned at high degree; ``method="monomial"`` converts ``h`` to
    monomials and applies Gaussian raw moments.
    """
    if method == "hermite":
        mom = gaussian_hermite_moments(d.positions, d.bandwidth, h.degree)
        return np.asarray(h.coeffs) @ mom
    if method == "monomial":
        mono = hermite_to_monomial(h)
        mom = gaussian_raw_moments(d.positions, d.bandwidth, h.degree)
        return mono @ mom
    raise InvalidParameterError(f"unknown method {method!r}")


def hbar(h, d, method="hermite"):
    """Exact ``int h(x) p(x) dx`` for a polynomial ``h`` and mixture ``d``."""
    if not isinstance(h, HermiteSeries):
        h = HermiteSeries(h)
    return float(np.mean(component_expectations(h, d, method)))


def ensemble_moments(e):
    """Sample mean and population variance (divides by ``Np``)."""
    x = as_ensemble(e).positions
    mean = x.mean()
    return float(mean), float(np.mean((x - mean) ** 2))
