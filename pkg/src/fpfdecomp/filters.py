"""Filter engines: feedback particle filter, bootstrap particle filter and a
Kalman reference for linear-Gaussian models.

Time is discretised with Euler-Maruyama at step ``dt``. In continuous mode the
data are observation increments ``dZ_n = h(X_{t_n}) dt + sqrt(R dt) V_n`` and
``observations[n + 1]`` holds ``dZ_n``. In discrete mode the state takes one
step of the same scheme and is then observed directly,
``z_{n+1} = h(X_{n+1}) + sqrt(R) V_{n+1}``.

The FPF never resamples. In discrete mode the observation is assimilated by a
pseudo-time flow ``dX/dlam = K_l(X)``, ``lam in [0, 1]``, where ``K_l`` is the
gain of the log-likelihood ``l = (z h - h^2/2) / R``; integrating the flow
transports the prior ensemble to the posterior.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .baselines import DEFAULT_KERNEL_BANDWIDTH, DEFAULT_KERNEL_TOL, kernel_gain
from .decomposition import DEFAULT_EPSILON, build_gain, evaluate_at_particles
from .density import MixtureDensity, ParticleEnsemble
from .exceptions import DivergenceError, InvalidModelError, InvalidParameterError
from .hermite import HermiteSeries, monomial_to_hermite, series_product

CONTINUOUS = "continuous"
DISCRETE = "discrete"
MODES = (CONTINUOUS, DISCRETE)


@dataclass(frozen=True)
class StateModel:
    """Scalar state-space model ``dX = g(X, t) dt + sigma(X) dB``, ``dZ = h(X) dt + dW``.

    Parameters
    ----------
    drift : callable
        ``g(x, t)``, vectorised in ``x``.
    diffusion : float or callable
        ``sigma(x)``; a constant is broadcast.
    h : HermiteSeries
        Observation polynomial.
    obs_intensity, process_intensity : float
        Variances per unit time of ``W`` and ``B``.
    mode : {"continuous", "discrete"}
    linear_drift : float, optional
        Set when ``g(x, t) = linear_drift * x``; enables the Kalman reference.
    """

    drift: Callable
    diffusion: Union[float, Callable]
    h: HermiteSeries
    obs_intensity: float = 1.0
    process_intensity: float = 1.0
    mode: str = CONTINUOUS
    linear_drift: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if not isinstance(self.h, HermiteSeries):
            object.__setattr__(self, "h", HermiteSeries(self.h))
        if not self.obs_intensity > 0 or not self.process_intensity > 0:
            raise InvalidParameterError("noise intensities must be positive")
        if self.mode not in MODES:
            raise InvalidParameterError(f"mode must be one of {MODES}, got {self.mode!r}")

    def sigma(self, x):
        if callable(self.diffusion):
            return self.diffusion(x)
        return self.diffusion

    def with_mode(self, mode):
        return StateModel(self.drift, self.diffusion, self.h, self.obs_intensity,
                          self.process_intensity, mode, self.linear_drift, self.name)


BENCHMARK_H = monomial_to_hermite([0.0, 0.0, 0.05])
BENCHMARK_X0 = 0.1
BENCHMARK_HORIZON = 40.0
BENCHMARK_DT = 0.01


def _benchmark_drift(x, t):
    # g = f - x for the map f(x, t) = x/2 + 25x/(1+x^2) + 8cos(1.2t)
    return -0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * np.cos(1.2 * t)


def benchmark_model(mode=CONTINUOUS):
    """Univariate nonstationary growth model with ``h(x) = 0.05 x^2``.

    The drift is the map increment, so one unit Euler step reproduces the
    difference equation ``X_{n+1} = X_n/2 + 25X_n/(1+X_n^2) + 8cos(1.2n) + B_n``
    with ``B_n ~ N(0, 10)``.
    """
    return StateModel(_benchmark_drift, float(np.sqrt(10.0)), BENCHMARK_H,
                      obs_intensity=1.0, process_intensity=1.0, mode=mode, name="benchmark")


def linear_gaussian_model(a=1.0, sigma=1.0, c=1.0, obs_intensity=1.0, mode=CONTINUOUS):
    """``dX = -a X dt + sigma dB``, ``dZ = c X dt + dW``."""
    return StateModel(lambda x, t: -a * x, float(sigma), HermiteSeries([0.0, 0.5 * c]),
                      obs_intensity=obs_intensity, mode=mode, linear_drift=-a,
                      name="linear-gaussian")


@dataclass(frozen=True)
class Trajectory:
    """Aligned time series; index 0 is the initial time.

    ``observations[0]`` is NaN. ``spread`` holds the ensemble (or posterior)
    standard deviation when a filter filled the estimates.
    """

    times: np.ndarray
    truth: np.ndarray
    observations: np.ndarray
    estimates: np.ndarray
    spread: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.times)
        for name in ("truth", "observations", "estimates"):
            if len(getattr(self, name)) != n:
                raise InvalidParameterError("trajectory series must have equal lengths")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidParameterError("times must be strictly increasing")

    @property
    def steps(self):
        return len(self.times) - 1

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if self.steps else np.nan

    def with_estimates(self, estimates, spread=None):
        return Trajectory(self.times, self.truth, self.observations,
                          np.asarray(estimates), None if spread is None else np.asarray(spread))


def simulate(model, x0, dt, n_steps, rng):
    """Truth and observations by Euler-Maruyama; estimates are NaN."""
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    n_steps = int(n_steps)
    noise = rng.standard_normal((n_steps, 2))
    times = dt * np.arange(n_steps + 1)
    x = np.empty(n_steps + 1)
    z = np.full(n_steps + 1, np.nan)
    x[0] = x0
    q_dt = np.sqrt(model.process_intensity * dt)
    r = model.obs_intensity
    h = model.h
    for n in range(n_steps):
        xn = x[n]
        if model.mode == CONTINUOUS:
            z[n + 1] = h(xn) * dt + np.sqrt(r * dt) * noise[n, 1]
        x[n + 1] = xn + model.drift(xn, times[n]) * dt + model.sigma(xn) * q_dt * noise[n, 0]
        if model.mode == DISCRETE:
            z[n + 1] = h(x[n + 1]) + np.sqrt(r) * noise[n, 1]
    return Trajectory(times, x, z, np.full(n_steps + 1, np.nan))


# gain methods: gain(x, h) gives K at the particles for a unit-intensity
# observation h; control(x, h) also returns the drift correction u

class DecompositionMethod:
    """Exact mixture gain; ``ito_correction`` adds ``K K'/2`` to the control."""

    name = "decomposition"

    def __init__(self, epsilon=DEFAULT_EPSILON, ito_correction=True, check=True):
        if not epsilon > 0:
            raise InvalidParameterError("epsilon must be positive")
        self.epsilon = float(epsilon)
        self.ito_correction = bool(ito_correction)
        self.check = check

    def _gain(self, x, h):
        d = MixtureDensity(ParticleEnsemble(x), self.epsilon)
        return build_gain(h, d, check=self.check)

    def gain(self, x, h):
        return evaluate_at_particles(self._gain(x, h), with_derivative=False)[0]

    def control(self, x, h):
        g = self._gain(x, h)
        k, dk = evaluate_at_particles(g, with_derivative=self.ito_correction)
        u = -0.5 * k * (h(x) + g.hbar_value)
        if self.ito_correction:
            u += 0.5 * k * dk
        return k, u


class ConstantGainMethod:
    name = "constant"

    def gain(self, x, h):
        hx = h(x)
        return np.full_like(x, np.dot(hx - hx.sum() / x.size, x) / x.size)

    def control(self, x, h):
        hx = h(x)
        hb = hx.sum() / x.size
        k = np.dot(hx - hb, x) / x.size
        return k, -0.5 * k * (hx + hb)


class KernelMethod:
    """Diffusion-map gain; ``K'`` is taken as zero in the control."""

    name = "kernel"

    def __init__(self, bandwidth=DEFAULT_KERNEL_BANDWIDTH, tol=DEFAULT_KERNEL_TOL,
                 max_iter=None, check_every=1):
        self.bandwidth = bandwidth
        self.tol = tol
        self.max_iter = max_iter
        self.check_every = check_every
        self.iterations = []

    def _solve(self, x, hx):
        res = kernel_gain(hx, x, self.bandwidth, self.tol, self.max_iter,
                          check_every=self.check_every)
        self.iterations.append(res.iterations)
        return res.gains

    def gain(self, x, h):
        return self._solve(x, h(x))

    def control(self, x, h):
        hx = h(x)
        k = self._solve(x, hx)
        return k, -0.5 * k * (hx + hx.sum() / x.size)


GAIN_METHODS = {
    DecompositionMethod.name: DecompositionMethod,
    ConstantGainMethod.name: ConstantGainMethod,
    KernelMethod.name: KernelMethod,
}


@dataclass(frozen=True)
class FilterState:
    """Particle positions at time index ``n``; ``rng`` drives the process noise."""

    n: int
    positions: np.ndarray
    rng: np.random.Generator = field(compare=False)

    @property
    def ensemble(self):
        return ParticleEnsemble(self.positions)


@dataclass(frozen=True)
class FilterConfig:
    """Ensemble size and prior ``N(initial_mean, initial_variance)``.

    ``substeps`` is the number of pseudo-time steps per discrete observation.
    """

    n_particles: int = 50
    initial_mean: float = 0.0
    initial_variance: float = 1.0
    substeps: int = 50

    def __post_init__(self):
        if self.n_particles < 1:
            raise InvalidParameterError("n_particles must be at least 1")
        if self.initial_variance < 0 or self.substeps < 1:
            raise InvalidParameterError("initial_variance must be >= 0 and substeps >= 1")


def initial_state(cfg, rng):
    x = cfg.initial_mean + np.sqrt(cfg.initial_variance) * rng.standard_normal(cfg.n_particles)
    return FilterState(0, x, rng)


def _propagate(x, m, t, dt, rng):
    return x + m.drift(x, t) * dt + m.sigma(x) * np.sqrt(m.process_intensity * dt) \
        * rng.standard_normal(x.size)


def _mean_std(x):
    m = x.sum() / x.size
    d = x - m
    return m, np.sqrt(np.dot(d, d) / x.size)


def _checked(x, n, label):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(n, label)
    return x


def fpf_step(s, dz, m, gain, dt):
    """One continuous-time FPF step using the increment ``dz`` over ``[t_n, t_n + dt)``.

    ``X <- X + g dt + sigma dB + (K dz + u dt) / R``, with ``K`` and ``u``
    supplied by ``gain`` for unit observation intensity.
    """
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    x = s.positions
    k, u = gain.control(x, m.h)
    r = m.obs_intensity
    new = _propagate(x, m, s.n * dt, dt, s.rng) + (k * dz + u * dt) / r
    return FilterState(s.n + 1, _checked(new, s.n, gain.name), s.rng)


def log_likelihood_series(h, z, obs_intensity):
    """``(z h - h^2/2) / R`` as a Hermite series."""
    return (float(z) * h + (-0.5) * series_product(h, h)) * (1.0 / obs_intensity)


MAX_MOVE = 0.5
STEP_BUDGET = 64


def fpf_discrete_step(s, z, m, gain, dt, substeps=50):
    """Propagate one step, then assimilate ``z`` by the pseudo-time flow.

    The flow over unit pseudo-time is integrated by Euler steps of at most
    ``1 / substeps``, shortened so that no particle moves further than
    ``MAX_MOVE`` ensemble standard deviations in one step.

    Raises
    ------
    DivergenceError
        If particles become non-finite or the flow needs more than
        ``STEP_BUDGET * substeps`` steps.
    """
    x = _checked(_propagate(s.positions, m, s.n * dt, dt, s.rng), s.n, gain.name)
    ell = log_likelihood_series(m.h, z, m.obs_intensity)
    lam, cap = 0.0, 1.0 / substeps
    for _ in range(STEP_BUDGET * substeps):
        k = _checked(gain.gain(x, ell), s.n, gain.name)
        reach = np.abs(k).max()
        dlam = min(cap, 1.0 - lam)
        if reach * dlam > 0:
            dlam = min(dlam, MAX_MOVE * max(x.std(), 1e-12) / reach)
        x = x + dlam * k
        lam += dlam
        if lam >= 1.0 - 1e-12:
            return FilterState(s.n + 1, x, s.rng)
    raise DivergenceError(s.n, gain.name)


def _initial_positions(cfg, rng, initial):
    if initial is None:
        return initial_state(cfg, rng).positions
    x = np.array(initial, dtype=float).reshape(-1)
    if x.size != cfg.n_particles:
        raise InvalidParameterError("initial ensemble size differs from n_particles")
    return x


def run_fpf(m, data, gain, cfg=FilterConfig(), rng=None, initial=None):
    """Run the FPF over ``data`` and return it with ensemble means filled in.

    Raises
    ------
    DivergenceError
        With the index of the step that produced a non-finite particle.
    """
    rng = np.random.default_rng() if rng is None else rng
    dt = data.dt
    s = FilterState(0, _initial_positions(cfg, rng, initial), rng)
    est = np.empty(data.steps + 1)
    spread = np.empty(data.steps + 1)
    est[0], spread[0] = _mean_std(s.positions)
    for n in range(data.steps):
        if m.mode == CONTINUOUS:
            s = fpf_step(s, data.observations[n + 1], m, gain, dt)
        else:
            s = fpf_discrete_step(s, data.observations[n + 1], m, gain, dt, cfg.substeps)
        est[n + 1], spread[n + 1] = _mean_std(s.positions)
    return data.with_estimates(est, spread)


def systematic_resample(weights, rng):
    """Indices drawn by systematic resampling of normalised ``weights``."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    cum = np.cumsum(w)
    cum[-1] = 1.0
    u = (rng.random() + np.arange(n)) / n
    return np.minimum(np.searchsorted(cum, u, side="right"), n - 1)


def normalized_weights(log_w):
    lw = np.asarray(log_w, dtype=float)
    w = np.exp(lw - lw.max())
    return w / w.sum()


def bootstrap_pf_step(s, z, m, dt):
    """One bootstrap step; returns ``(new_state, weighted_mean_estimate)``.

    Continuous mode weights the current particles by the likelihood of the
    increment ``z``; discrete mode weights the propagated particles by ``z``.
    The estimate is the weighted mean of the propagated particles, taken
    before systematic resampling.
    """
    x = s.positions
    r = m.obs_intensity
    if m.mode == CONTINUOUS:
        resid = z - m.h(x) * dt
        w = normalized_weights(-resid * resid / (2.0 * r * dt))
        x = _propagate(x, m, s.n * dt, dt, s.rng)
    else:
        x = _propagate(x, m, s.n * dt, dt, s.rng)
        resid = z - m.h(x)
        w = normalized_weights(-resid * resid / (2.0 * r))
    x = _checked(x, s.n, "pf")
    estimate = float(np.dot(w, x))
    idx = systematic_resample(w, s.rng)
    return FilterState(s.n + 1, x[idx], s.rng), estimate


def run_pf(m, data, cfg=FilterConfig(), rng=None, initial=None):
    rng = np.random.default_rng() if rng is None else rng
    dt = data.dt
    s = FilterState(0, _initial_positions(cfg, rng, initial), rng)
    est = np.empty(data.steps + 1)
    spread = np.empty(data.steps + 1)
    est[0], spread[0] = _mean_std(s.positions)
    for n in range(data.steps):
        s, est[n + 1] = bootstrap_pf_step(s, data.observations[n + 1], m, dt)
        spread[n + 1] = _mean_std(s.positions)[1]
    return data.with_estimates(est, spread)


def riccati_flow(p0, alpha, beta, gamma, t):
    """Exact solution of ``P' = alpha + 2 beta P - gamma P**2`` after time ``t``.

    Parameters
    ----------
    p0 : float
        Initial value, non-negative.
    alpha, beta, gamma : float
        Coefficients with ``alpha >= 0`` and ``gamma >= 0``.
    t : float
        Elapsed time, non-negative.
    """
    if gamma == 0.0:
        if beta == 0.0:
            return p0 + alpha * t
        growth = np.expm1(2.0 * beta * t)
        return p0 + (2.0 * beta * p0 + alpha) * growth / (2.0 * beta)
    d = np.sqrt(beta * beta + alpha * gamma)
    p_plus = (beta + d) / gamma
    u0 = p0 - p_plus
    decay = np.exp(-2.0 * d * t)
    phi = t if d == 0.0 else -np.expm1(-2.0 * d * t) / (2.0 * d)
    # u = P - P+ obeys a Bernoulli equation with a closed-form solution
    return p_plus + u0 * decay / (1.0 + u0 * gamma * phi)


def kalman_bucy_reference(m, data, initial_mean=0.0, initial_variance=1.0):
    """Kalman filter for the linear-Gaussian model.

    In continuous mode the variance follows the Riccati flow exactly over each
    step and the mean takes an Euler step driven by the observation increment.
    In discrete mode this is the Kalman recursion for the Euler-propagated state.

    Returns the trajectory with posterior means as estimates and posterior
    standard deviations as spread.

    Raises
    ------
    InvalidModelError
        Unless the drift is linear, the diffusion constant and ``h`` affine.
    """
    if m.linear_drift is None or callable(m.diffusion) or m.h.reduced().degree > 1:
        raise InvalidModelError("the Kalman reference needs a linear-Gaussian model")
    coeffs = m.h.coeffs + (0.0,)
    c0, c1 = coeffs[0], 2.0 * coeffs[1]
    a = 1.0 + m.linear_drift * data.dt
    dt = data.dt
    q = m.diffusion ** 2 * m.process_intensity * dt
    r = m.obs_intensity
    gamma = c1 * c1 / r
    mean, var = float(initial_mean), float(initial_variance)
    est = np.empty(data.steps + 1)
    sd = np.empty(data.steps + 1)
    est[0], sd[0] = mean, np.sqrt(var)
    for n in range(data.steps):
        z = data.observations[n + 1]
        if m.mode == CONTINUOUS:
            gain = var * c1 / r
            mean = a * mean + gain * (z - (c0 + c1 * mean) * dt)
            var = riccati_flow(var, q / dt, m.linear_drift, gamma, dt)
        else:
            mean, var = a * mean, a * a * var + q
            g = var * c1 / (c1 * c1 * var + r)
            mean, var = mean + g * (z - c0 - c1 * mean), (1.0 - g * c1) * var
        est[n + 1], sd[n + 1] = mean, np.sqrt(var)
    return data.with_estimates(est, sd)
