"""Physicists' Hermite polynomials and series in the Hermite basis.

Convention: weight ``exp(-x**2)``, ``H_0 = 1``, ``H_1 = 2x`` and
``H_{n+1} = 2x H_n - 2n H_{n-1}``.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .exceptions import InvalidParameterError

MAX_DEGREE = 512


def _check_degree(degree):
    if degree < 0:
        raise InvalidParameterError(f"degree must be non-negative, got {degree}")
    if degree > MAX_DEGREE:
        raise InvalidParameterError(
            f"degree {degree} exceeds the supported maximum {MAX_DEGREE}")


@dataclass(frozen=True)
class HermiteSeries:
    """Polynomial ``sum_k coeffs[k] * H_k(x)``.

    Parameters
    ----------
    coeffs : sequence of float
        Coefficients ``a_0 .. a_p``. Stored as an immutable tuple.
    """

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(np.asarray(self.coeffs, dtype=float)))
        if not c:
            raise InvalidParameterError("a Hermite series needs at least one coefficient")
        if not all(np.isfinite(c)):
            raise InvalidParameterError("Hermite coefficients must be finite")
        _check_degree(len(c) - 1)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def as_array(self):
        return np.array(self.coeffs)

    def reduced(self):
        """Drop trailing zero coefficients (keeps at least ``a_0``)."""
        if len(self.coeffs) == 1 or self.coeffs[-1] != 0.0:
            return self
        c = list(self.coeffs)
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        return HermiteSeries(tuple(c))

    def derivative(self):
        """Series of the derivative, using ``H_n' = 2n H_{n-1}``."""
        a = self.as_array()
        if len(a) == 1:
            return HermiteSeries((0.0,))
        return HermiteSeries(2.0 * np.arange(1, len(a)) * a[1:])

    def __call__(self, x):
        return series_eval(self, x)

    def __add__(self, other):
        a, b = self.as_array(), other.as_array()
        n = max(len(a), len(b))
        return HermiteSeries(np.pad(a, (0, n - len(a))) + np.pad(b, (0, n - len(b))))

    def __mul__(self, scalar):
        return HermiteSeries(self.as_array() * float(scalar))

    __rmul__ = __mul__

    @classmethod
    def basis(cls, k, scale=1.0):
        """The series ``scale * H_k``."""
        _check_degree(k)
        c = np.zeros(k + 1)
        c[k] = scale
        return cls(c)

    @classmethod
    def from_monomial(cls, coeffs):
        return monomial_to_hermite(coeffs)


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def hermite_eval(k, x):
    """Evaluate ``H_k(x)`` by the three-term recurrence.

    Parameters
    ----------
    k : int
        Degree, ``0 <= k <= MAX_DEGREE``.
    x : float or array_like
        Evaluation points.
    """
    _check_degree(k)
    xa = np.asarray(x, dtype=float)
    prev = np.ones_like(xa)
    if k == 0:
        return _scalar_or_array(x, prev)
    cur = 2.0 * xa
    for n in range(1, k):
        prev, cur = cur, 2.0 * xa * cur - 2.0 * n * prev
    return _scalar_or_array(x, cur)


def hermite_basis(x, degree):
    """Stack ``[H_0(x), ..., H_degree(x)]`` along a new leading axis."""
    _check_degree(degree)
    xa = np.asarray(x, dtype=float)
    out = np.empty((degree + 1,) + xa.shape)
    out[0] = 1.0
    if degree >= 1:
        out[1] = 2.0 * xa
    for n in range(1, degree):
        out[n + 1] = 2.0 * xa * out[n] - 2.0 * n * out[n - 1]
    return out


def series_eval(s, x):
    """Evaluate a Hermite series with the Clenshaw recurrence.

    ``b_k = a_k + 2x b_{k+1} - 2(k+1) b_{k+2}`` and the value is ``b_0``;
    the cost is linear in the degree.
    """
    a = s.coeffs if isinstance(s, HermiteSeries) else tuple(np.asarray(s, dtype=float))
    xa = np.asarray(x, dtype=float)
    b1 = np.full(xa.shape, a[-1])
    b2 = 0.0
    x2 = 2.0 * xa
    for k in range(len(a) - 2, -1, -1):
        b1, b2 = a[k] + x2 * b1 - (2.0 * (k + 1)) * b2, b1
    return _scalar_or_array(x, b1)


@lru_cache(maxsize=8)
def _hermite_to_monomial_table(degree):
    # row k holds the monomial coefficients of H_k
    t = np.zeros((degree + 1, degree + 1))
    t[0, 0] = 1.0
    if degree >= 1:
        t[1, 1] = 2.0
    for n in range(1, degree):
        t[n + 1, 1:] = 2.0 * t[n, :-1]
        t[n + 1] -= 2.0 * n * t[n - 1]
    t.setflags(write=False)
    return t


@lru_cache(maxsize=8)
def _monomial_to_hermite_table(degree):
    # row n holds the Hermite coefficients of x**n; x H_k = H_{k+1}/2 + k H_{k-1}
    t = np.zeros((degree + 1, degree + 1))
    t[0, 0] = 1.0
    k = np.arange(degree + 1)
    for n in range(degree):
        row = t[n]
        t[n + 1, 1:] = 0.5 * row[:-1]
        t[n + 1, :-1] += k[1:] * row[1:]
    t.setflags(write=False)
    return t


def series_product(s, t):
    """Product of two Hermite series, kept in the Hermite basis.

    Uses the linearisation ``H_m H_n = sum_k 2^k k! C(m,k) C(n,k) H_{m+n-2k}``.
    """
    a, b = s.coeffs, t.coeffs
    out = np.zeros(len(a) + len(b) - 1)
    for m, am in enumerate(a):
        if am == 0.0:
            continue
        for n, bn in enumerate(b):
            if bn == 0.0:
                continue
            for k in range(min(m, n) + 1):
                out[m + n - 2 * k] += am * bn * (2.0 ** k) * factorial(k) * comb(m, k) * comb(n, k)
    return HermiteSeries(out)


def _checked(values, what):
    if not np.all(np.isfinite(values)):
        raise OverflowError(f"{what} is not representable in float64 at this degree")
    return values


def monomial_to_hermite(m):
    """Convert monomial coefficients ``m[0] + m[1] x + ...`` to a Hermite series."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    if m.size == 0:
        raise InvalidParameterError("empty coefficient list")
    _check_degree(m.size - 1)
    table = _monomial_to_hermite_table(m.size - 1)
    with np.errstate(over="ignore", invalid="ignore"):
        a = m @ table
    return HermiteSeries(_checked(a, "Hermite coefficients"))


def hermite_to_monomial(s):
    """Monomial coefficients (ascending powers) of a Hermite series."""
    a = s.as_array()
    table = _hermite_to_monomial_table(s.degree)
    with np.errstate(over="ignore", invalid="ignore"):
        m = a @ table
    return _checked(m, "monomial coefficients")
