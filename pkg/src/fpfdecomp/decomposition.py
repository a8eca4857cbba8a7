"""Exact scalar gain by the decomposition method.

For a polynomial observation ``h = sum_k a_k H_k`` and the mixture density
``p(x) = (1/Np) sum_i N(x; X^i, eps)`` the Poisson equation
``(p K)' = -(h - hbar) p`` is split per particle into a part solved in the
Hermite basis and a part integrated in closed form with ``erf``::

    K(x) = sum_i [ N_i(x) P_i(x) + (hbar - C^i)/2 * erf((x - X^i)/sqrt(2 eps)) ]
           / sum_i N_i(x),

with ``P_i = sum_{l<p} Khat^i_l H_l``. The coefficients come from a backward
recursion and the constant ``C^i`` makes the per-particle equation exactly
solvable; ``C^i`` is then the mean of ``h`` under ``N(X^i, eps)``.
"""

from dataclasses import dataclass

import numpy as np

from .density import (ERF_SATURATION, MixtureDensity, as_ensemble, component_expectations,
                      erf, erfcx)
from .exceptions import ConsistencyError, InvalidParameterError
from .hermite import HermiteSeries, hermite_basis

DEFAULT_EPSILON = 0.01
IDENTITY_RTOL = 1e-10

# nearest particle further than sqrt(TAIL_Z2) kernel widths: use the erfcx form
TAIL_Z2 = 2.0
_MAX_BLOCK = 2_000_000
# ensemble size from which evaluate_at_particles exploits pair symmetry
_SYMMETRIC_FROM = 150


def _as_series(h):
    return h if isinstance(h, HermiteSeries) else HermiteSeries(h)


def _check_epsilon(epsilon):
    if not epsilon > 0:
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon}")


def _backward_recursion(a, x, epsilon):
    """Vectorised recursion over particle positions ``x``; returns (Np, p) and (Np,)."""
    p = len(a) - 1
    x = np.asarray(x, dtype=float)
    khat = np.zeros((p + 2,) + x.shape)
    for k in range(p - 1, -1, -1):
        khat[k] = (2.0 * epsilon * a[k + 1]
                   + 2.0 * (2.0 * epsilon - 1.0) * (k + 2) * khat[k + 2]
                   + 2.0 * x * khat[k + 1])
    c = a[0] + (x / epsilon) * khat[0] + (2.0 - 1.0 / epsilon) * khat[1]
    return khat[:p].T, c


def solve_coefficients(h, x_i, epsilon):
    """Hermite coefficients of the per-particle gain and its constant.

    Parameters
    ----------
    h : HermiteSeries
        Observation function of degree ``p``.
    x_i : float
        Particle position.
    epsilon : float
        Kernel variance.

    Returns
    -------
    coeffs : ndarray, shape (p,)
        ``Khat_0 .. Khat_{p-1}``, computed for ``k = p-1, ..., 0`` from
        ``Khat_k = 2 eps a_{k+1} + 2 (2 eps - 1)(k + 2) Khat_{k+2} + 2 x_i Khat_{k+1}``
        with ``Khat_p = Khat_{p+1} = 0``.
    c_i : float
        ``a_0 + (x_i / eps) Khat_0 + (2 - 1/eps) Khat_1``.
    """
    _check_epsilon(epsilon)
    h = _as_series(h)
    coeffs, c = _backward_recursion(h.coeffs, float(x_i), epsilon)
    return coeffs, float(c)


@dataclass(frozen=True)
class DecompositionGain:
    """Gain of one ensemble; evaluate with :meth:`__call__`, :meth:`derivative`
    or :meth:`control`."""

    h: HermiteSeries
    density: MixtureDensity
    coefficients: np.ndarray
    constants: np.ndarray
    hbar_value: float

    @property
    def epsilon(self):
        return self.density.bandwidth

    @property
    def positions(self):
        return self.density.positions

    @property
    def _columns(self):
        # [Khat_0 .. Khat_{p-1}, c_i, 1]; the c column is used for K'
        cols = self.__dict__.get("_cols")
        if cols is None:
            p = self.coefficients.shape[1]
            cols = np.empty((self.positions.size, p + 2))
            cols[:, :p] = self.coefficients
            cols[:, p] = self.erf_weights
            cols[:, p + 1] = 1.0
            object.__setattr__(self, "_cols", cols)
        return cols

    @property
    def erf_weights(self):
        """``(hbar - C^i) / 2``, the weight of each particle's erf term."""
        return 0.5 * (self.hbar_value - self.constants)

    def __call__(self, x):
        return gain_eval(self, x)

    def derivative(self, x):
        return gain_derivative(self, x)

    def control(self, x):
        return control_u(self, x)


def build_gain(h, density, *, check=True, rtol=IDENTITY_RTOL):
    """Solve the per-particle problems and assemble the gain.

    Raises
    ------
    ConsistencyError
        If ``hbar`` and the mean of the constants differ by more than ``rtol``
        relative to ``max(|hbar|, mean |C^i|)``.
    """
    h = _as_series(h).reduced()
    if not isinstance(density, MixtureDensity):
        raise InvalidParameterError("density must be a MixtureDensity")
    x = density.positions
    if h.degree == 0:
        coeffs = np.zeros((x.size, 0))
        consts = np.full(x.size, h.coeffs[0])
        return DecompositionGain(h, density, coeffs, consts, h.coeffs[0])
    coeffs, consts = _backward_recursion(h.coeffs, x, density.bandwidth)
    n = x.size
    hb = float(component_expectations(h, density).sum()) / n
    if check:
        mean_c = float(consts.sum()) / n
        gap = abs(hb - mean_c)
        if gap > rtol * max(abs(hb), float(np.abs(consts).sum()) / n):
            raise ConsistencyError(
                f"hbar {hb!r} differs from mean of C^i {mean_c!r} (gap {gap:.3e})")
    coeffs.setflags(write=False)
    consts.setflags(write=False)
    return DecompositionGain(h, density, coeffs, consts, hb)


def gain_from_particles(h, positions, epsilon=DEFAULT_EPSILON, **kwargs):
    return build_gain(h, MixtureDensity(as_ensemble(positions), epsilon), **kwargs)


def _evaluate_block(g, xq, with_derivative):
    # every particle sum is a product of the pivoted kernel matrix w with a
    # per-particle column, so no (points x particles) polynomial table is formed
    X = g.positions
    eps = g.epsilon
    p = g.coefficients.shape[1]
    c = g.erf_weights
    diff = xq[:, None] - X
    z = diff * (1.0 / np.sqrt(2.0 * eps))
    z2 = z * z
    z2min = z2.min(axis=1)
    w = np.exp(z2min[:, None] - z2)
    sums = w @ g._columns
    den = sums[:, -1]
    basis = hermite_basis(xq, p - 1)
    num = np.einsum("lm,ml->m", basis, sums[:, :p])

    norm = np.sqrt(2.0 * np.pi * eps)
    tail = z2min > TAIL_Z2
    if not tail.any():
        num += norm * np.exp(z2min) * (erf(z) @ c)
    else:
        reg = ~tail
        if reg.any():
            num[reg] += norm * np.exp(z2min[reg]) * (erf(z[reg]) @ c)
        # erf(z) = +-1 -+ erfc(|z|) and sum_i c_i = 0, so only a one-sided
        # constant survives plus Gaussian-weighted erfcx terms
        zt = z[tail]
        pos = zt >= 0
        side = np.where(pos, c, -c).sum(axis=1)
        side[pos.all(axis=1) | (~pos).all(axis=1)] = 0.0
        corr = (np.where(pos, -c, c) * erfcx(np.abs(zt)) * w[tail]).sum(axis=1)
        with np.errstate(over="ignore", invalid="ignore"):
            lifted = np.where(side != 0.0, side * np.exp(z2min[tail]), 0.0)
        num[tail] += norm * (lifted + corr)

    with np.errstate(over="ignore", invalid="ignore"):
        k = num / den
    if not with_derivative:
        return k, None
    # K' = sum_i w_i [P_i' - (x - X^i)(P_i - K)/eps + 2 c_i] / sum_i w_i
    moments = (w * diff) @ g._columns
    d_poly = 0.0
    if p > 1:
        d_poly = np.einsum("lm,ml->m", basis[:p - 1], sums[:, 1:p] * (2.0 * np.arange(1, p)))
    drift = np.einsum("lm,ml->m", basis, moments[:, :p]) - k * moments[:, p + 1]
    with np.errstate(over="ignore", invalid="ignore"):
        dk = (d_poly - drift / eps + 2.0 * sums[:, p]) / den
    return k, dk


def evaluate(g, x, with_derivative=True):
    """Gain and (optionally) its derivative at ``x``; returns ``(K, K')``.

    Ratios are formed relative to the nearest particle's kernel, so points far
    from all particles never divide by an underflowed density.
    """
    xa = np.asarray(x, dtype=float)
    xq = xa.reshape(-1)
    if g.coefficients.shape[1] == 0:
        zero = np.zeros_like(xq)
        k, dk = zero, (zero.copy() if with_derivative else None)
    else:
        step = max(1, _MAX_BLOCK // g.positions.size)
        parts = [_evaluate_block(g, xq[i:i + step], with_derivative)
                 for i in range(0, xq.size, step)]
        k = np.concatenate([pt[0] for pt in parts]) if parts else xq.copy()
        dk = (np.concatenate([pt[1] for pt in parts]) if parts else xq.copy()) \
            if with_derivative else None

    def shape(v):
        if v is None:
            return None
        return float(v[0]) if xa.ndim == 0 else v.reshape(xa.shape)

    return shape(k), shape(dk)


def evaluate_at_particles(g, with_derivative=True):
    """``(K, K')`` at the particle positions themselves.

    Pairs further apart than ``ERF_SATURATION * sqrt(2 eps)`` contribute
    exactly ``+-1`` to the erf sums and kernel weights below ``e^-42`` next to
    the unit self weight, so only closer pairs are evaluated.
    """
    X = g.positions
    n = X.size
    p = g.coefficients.shape[1]
    if p == 0:
        zero = np.zeros(n)
        return zero, (zero.copy() if with_derivative else None)
    eps = g.epsilon
    scale = np.sqrt(2.0 * eps)
    diff = X[:, None] - X
    limit = ERF_SATURATION * scale
    w = np.zeros((n, n))
    e = np.sign(diff)
    if n < _SYMMETRIC_FROM:
        near = np.flatnonzero(np.abs(diff) < limit)
        zn = diff.take(near) * (1.0 / scale)
        w.put(near, np.exp(-zn * zn))
        e.put(near, erf(zn))
    else:
        # w is symmetric and e antisymmetric (bitwise), so large ensembles
        # evaluate only the pairs i < j
        up = np.flatnonzero(np.triu(np.abs(diff) < limit, 1))
        i, j = np.divmod(up, n)
        low = j * n + i
        zn = diff.take(up) * (1.0 / scale)
        kern = np.exp(-zn * zn)
        w.put(up, kern)
        w.put(low, kern)
        w.flat[::n + 1] = 1.0
        ez = erf(zn)
        e.put(up, ez)
        e.put(low, -ez)
    cols = g._columns
    sums = w @ cols
    den = sums[:, -1]
    basis = hermite_basis(X, p - 1)
    num = np.einsum("lm,ml->m", basis, sums[:, :p]) + np.sqrt(np.pi) * scale * (e @ g.erf_weights)
    k = num / den
    if not with_derivative:
        return k, None
    moments = (w * diff) @ cols
    d_poly = 0.0
    if p > 1:
        d_poly = np.einsum("lm,ml->m", basis[:p - 1], sums[:, 1:p] * (2.0 * np.arange(1, p)))
    drift = np.einsum("lm,ml->m", basis, moments[:, :p]) - k * moments[:, p + 1]
    dk = (d_poly - drift / eps + 2.0 * sums[:, p]) / den
    return k, dk


def gain_eval(g, x):
    """``K(x)``."""
    return evaluate(g, x, with_derivative=False)[0]


def gain_derivative(g, x):
    """``K'(x)`` from the quotient rule on the closed form."""
    return evaluate(g, x, with_derivative=True)[1]


def control_u(g, x):
    """``u = -K (h + hbar)/2 + K K'/2`` (unit observation-noise intensity)."""
    k, dk = evaluate(g, x, with_derivative=True)
    hx = g.h(x)
    return -0.5 * k * (hx + g.hbar_value) + 0.5 * k * dk


def poisson_residual(g, x):
    """Residual ``(p K)' + (h - hbar) p`` assembled from the per-particle parts.

    ``(N_i P_i)' = N_i (P_i' - (x - X^i) P_i / eps)`` and the erf part
    contributes ``(hbar - C^i) N_i``. Returns ``(residual, (h - hbar) p)``.
    """
    xq = np.asarray(x, dtype=float).reshape(-1)
    X = g.positions
    eps = g.epsilon
    diff = xq[:, None] - X
    nk = np.exp(-diff * diff / (2.0 * eps)) / np.sqrt(2.0 * np.pi * eps)
    p = g.coefficients.shape[1]
    dens = nk.mean(axis=1)
    forcing = (g.h(xq) - g.hbar_value) * dens
    if p == 0:
        return np.zeros_like(xq), forcing
    basis = hermite_basis(xq, p - 1)
    poly = basis.T @ g.coefficients.T
    if p > 1:
        dpoly = basis[:p - 1].T @ (g.coefficients[:, 1:] * (2.0 * np.arange(1, p))).T
    else:
        dpoly = 0.0
    flux = (nk * (dpoly - diff * poly / eps + 2.0 * g.erf_weights)).mean(axis=1)
    return flux + forcing, forcing
