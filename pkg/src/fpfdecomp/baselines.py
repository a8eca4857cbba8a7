"""Reference and approximate gains used for comparison.

* :func:`exact_gain_quadrature` integrates the scalar Poisson equation directly
  for a known density and serves as the accuracy oracle.
* :func:`constant_gain` replaces the gain by the ensemble cross-covariance of
  ``h`` and the state.
* :func:`kernel_gain` is the diffusion-map construction over the particles
  with a fixed-point solve for the potential.
"""

from dataclasses import dataclass

import numpy as np

from .density import as_ensemble
from .exceptions import ConsistencyError, InvalidParameterError, SingularDensityError
from .hermite import HermiteSeries

MIN_GRID_POINTS = 64
DEFAULT_KERNEL_BANDWIDTH = 0.1
DEFAULT_KERNEL_TOL = 1e-8


@dataclass(frozen=True)
class GridGain:
    """Gain tabulated on a strictly increasing grid, linearly interpolated."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.array(self.grid, dtype=float).reshape(-1)
        v = np.array(self.values, dtype=float).reshape(-1)
        if g.size != v.size:
            raise InvalidParameterError("grid and values must have equal length")
        if g.size < 2 or np.any(np.diff(g) <= 0):
            raise InvalidParameterError("grid must be strictly increasing with at least 2 points")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        out = np.interp(x, self.grid, self.values)
        return float(out) if np.ndim(x) == 0 else out


def _refined(grid, refine, min_intervals):
    n_int = grid.size - 1
    factor = max(refine, -(-min_intervals // n_int))
    t = np.linspace(0.0, 1.0, factor + 1)[:-1]
    fine = (grid[:-1, None] + np.diff(grid)[:, None] * t).reshape(-1)
    return np.append(fine, grid[-1]), factor


def exact_gain_quadrature(h, pdf, grid, *, refine=4, min_intervals=2 ** 16,
                          end_tol=1e-12, total_tol=1e-8):
    """Gain of a known density by direct integration of the Poisson equation.

    ``K(x) = -(1/p(x)) int_{-inf}^x (h - hbar) p dy`` with the integral
    accumulated by the composite trapezoid rule on a uniform refinement of
    ``grid`` (at least ``refine`` sub-intervals per cell and at least
    ``min_intervals`` in total).

    Parameters
    ----------
    h, pdf : callable
        Vectorised observation function and density.
    grid : array_like
        Strictly increasing evaluation points, at least 64 of them. The
        density must be negligible at both ends.

    Returns
    -------
    GridGain

    Raises
    ------
    SingularDensityError
        If the density is below ``1e-300`` at an interior grid point.
    """
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size < MIN_GRID_POINTS:
        raise InvalidParameterError(f"grid needs at least {MIN_GRID_POINTS} points")
    if np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("grid must be strictly increasing")
    if refine < 4:
        raise InvalidParameterError("refine must be at least 4")
    pg = np.asarray(pdf(grid), dtype=float)
    if np.any(pg < 0) or not np.all(np.isfinite(pg)):
        raise InvalidParameterError("pdf must be finite and non-negative")
    if max(pg[0], pg[-1]) > end_tol * pg.max():
        raise InvalidParameterError("pdf is not negligible at the grid ends")
    if np.any(pg[1:-1] < 1e-300):
        raise SingularDensityError("pdf vanishes at an interior grid point")

    fine, factor = _refined(grid, refine, min_intervals)
    pf = np.asarray(pdf(fine), dtype=float)
    hf = np.asarray(h(fine), dtype=float) * np.ones_like(fine)
    dx = np.diff(fine)
    mass = np.sum(0.5 * (pf[1:] + pf[:-1]) * dx)
    # normalising by the quadrature mass makes the total integral vanish
    hb = np.sum(0.5 * ((hf * pf)[1:] + (hf * pf)[:-1]) * dx) / mass
    f = (hf - hb) * pf
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * dx)))
    scale = np.sum(np.abs(f[1:] + f[:-1]) * 0.5 * dx)
    if abs(cum[-1]) > total_tol * max(scale, 1e-300):
        raise ConsistencyError(f"antiderivative does not vanish at the right end: {cum[-1]:.3e}")
    idx = np.arange(grid.size) * factor
    values = -cum[idx] / pf[idx]
    values[0] = values[1] if pf[0] < 1e-300 else values[0]
    values[-1] = values[-2] if pf[-1] < 1e-300 else values[-1]
    return GridGain(grid, values)


def constant_gain(h, e):
    """Ensemble cross-covariance ``(1/Np) sum (h(X^i) - hbar_emp) X^i``."""
    x = as_ensemble(e).positions
    hx = (h if isinstance(h, HermiteSeries) else HermiteSeries(h))(x)
    return float(np.mean((hx - hx.mean()) * x))


@dataclass(frozen=True)
class KernelGainResult:
    """Per-particle kernel gains with fixed-point diagnostics.

    ``residual`` is the sup-norm change of the last sweep; ``converged``
    records whether it fell below the tolerance within ``max_iter`` sweeps.
    """

    gains: np.ndarray
    iterations: int
    residual: float
    converged: bool
    potential: np.ndarray = None


def markov_matrix(x, bandwidth):
    """Row-stochastic diffusion-map matrix ``T`` over positions ``x``."""
    d = x[:, None] - x
    g = np.exp(d * d * (-0.25 / bandwidth))
    # the row factor of the symmetric normalisation cancels in the row sums
    k = g * (1.0 / np.sqrt(g.sum(axis=1)))
    k /= k.sum(axis=1)[:, None]
    return k


def _affine_power(a, r, n):
    """``(A^n, sum_{k<n} A^k r)``: n sweeps of ``v -> A v + r`` as one affine map."""
    res_m, res_v = None, None
    pm, pv = a, r
    while n:
        if n & 1:
            if res_m is None:
                res_m, res_v = pm, pv
            else:
                res_m, res_v = pm @ res_m, pm @ res_v + pv
        n >>= 1
        if n:
            pm, pv = pm @ pm, pm @ pv + pv
    if res_m is None:
        return np.eye(a.shape[0]), np.zeros(a.shape[0])
    return res_m, res_v


def kernel_gain(h_values, e, kernel_bandwidth=DEFAULT_KERNEL_BANDWIDTH,
                tol=DEFAULT_KERNEL_TOL, max_iter=None, *, phi0=None, check_every=1):
    """Kernel (diffusion-map) gain at the particles.

    The potential solves ``Phi = T Phi + bw (h - hbar_emp)`` by re-centred
    fixed-point sweeps started from ``phi0`` (zero by default), then
    ``K_i = (1/(2 bw)) sum_j T_ij (Phi_j + bw h_j)(X^j - sum_l T_il X^l)``.

    Parameters
    ----------
    h_values : array_like
        ``h(X^i)``.
    e : ParticleEnsemble or array_like
        At least two particles.
    kernel_bandwidth, tol : float
        Positive kernel bandwidth and sup-norm stopping tolerance.
    max_iter : int, optional
        Sweep limit, ``10 * Np`` by default.
    check_every : int
        Sweeps between convergence checks. Blocks of sweeps are applied as a
        single precomputed affine map, so values above one trade a few extra
        sweeps after convergence for far fewer matrix-vector products.
    """
    x = as_ensemble(e).positions
    n = x.size
    hv = np.asarray(h_values, dtype=float).reshape(-1)
    if n < 2:
        raise InvalidParameterError("kernel gain needs at least two particles")
    if hv.size != n:
        raise InvalidParameterError("h_values must have one entry per particle")
    if not kernel_bandwidth > 0 or not tol > 0:
        raise InvalidParameterError("bandwidth and tolerance must be positive")
    max_iter = 10 * n if max_iter is None else int(max_iter)
    if max_iter < 0 or check_every < 1:
        raise InvalidParameterError("max_iter must be >= 0 and check_every >= 1")

    bw = kernel_bandwidth
    t = markov_matrix(x, bw)
    a = t - t.sum(axis=0) * (1.0 / n)
    r = bw * (hv - hv.sum() / n)
    if phi0 is None:
        phi = np.zeros(n)
    else:
        phi = np.asarray(phi0, dtype=float).reshape(-1)
        phi = phi - phi.sum() / n

    it, change, converged = 0, np.inf, False
    blocks = {}
    while it < max_iter:
        b = min(check_every, max_iter - it)
        if b == 1:
            new = a @ phi + r
            change = float(np.abs(new - phi).max())
            phi = new
        else:
            if b not in blocks:
                lead, lead_v = _affine_power(a, r, b - 1)
                blocks[b] = (lead, a @ lead, a @ lead_v + r)
            lead, block_m, block_v = blocks[b]
            # change of the block's last sweep is A^{b-1} times the first one
            change = float(np.abs(lead @ (a @ phi + r - phi)).max())
            phi = block_m @ phi + block_v
        it += b
        if change <= tol:
            converged = True
            break

    mean_x = t @ x
    gains = ((t * (x[None, :] - mean_x[:, None])) @ (phi + bw * hv)) / (2.0 * bw)
    return KernelGainResult(gains, it, change, converged, phi)
