"""Experiment harness: gain accuracy on a bimodal density, CPU scaling of the
decomposition gain, and the Monte-Carlo tracking benchmark."""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import DEFAULT_KERNEL_BANDWIDTH, DEFAULT_KERNEL_TOL, constant_gain, \
    exact_gain_quadrature, kernel_gain
from .decomposition import DEFAULT_EPSILON, build_gain, gain_eval
from .density import MixtureDensity, ParticleEnsemble, gaussian_pdf
from .exceptions import DivergenceError, InvalidParameterError
from .filters import (BENCHMARK_DT, BENCHMARK_HORIZON, BENCHMARK_X0, CONTINUOUS, DISCRETE,
                      ConstantGainMethod, DecompositionMethod, FilterConfig, KernelMethod,
                      benchmark_model, run_fpf, run_pf, simulate)
from .hermite import HermiteSeries

METHODS = ("decomposition", "kernel", "constant", "pf")
TRACK_FACTOR = 4.0
WORKERS_ENV = "FPFDECOMP_WORKERS"

# values reported for the 100-run benchmark (mean MSE, mean CPU seconds per run)
PAPER_REFERENCE = {
    "decomposition": {"mean_mse": 256.24, "mean_cpu_seconds": 0.48},
    "kernel": {"mean_mse": 257.72, "mean_cpu_seconds": 0.85},
    "constant": {"mean_mse": 421.49, "mean_cpu_seconds": 0.03, "tracked_count": 55},
    "pf": {"mean_mse": 322.36, "mean_cpu_seconds": 1.13},
}


def mse(truth, estimates):
    """``(sum (x - xhat)^2, sqrt(sum / len))``."""
    t = np.asarray(truth, dtype=float).reshape(-1)
    e = np.asarray(estimates, dtype=float).reshape(-1)
    if t.size != e.size or t.size == 0:
        raise InvalidParameterError("truth and estimates must be non-empty and of equal length")
    total = float(np.sum((t - e) ** 2))
    return total, float(np.sqrt(total / t.size))


def unit_time_indices(times):
    """Indices of the samples at ``t = 1, 2, ...``."""
    t = np.asarray(times, dtype=float)
    whole = np.isclose(t, np.round(t), rtol=0.0, atol=1e-9) & (t > 0.5)
    return np.flatnonzero(whole)


# -- gain accuracy on a two-component mixture --------------------------------

@dataclass(frozen=True)
class Example1Result:
    """Gains on ``grid`` and their density-weighted L2 errors against the exact gain.

    ``kernel`` is linearly interpolated from the per-particle gains.
    """

    grid: np.ndarray
    exact: np.ndarray
    decomposition: dict
    constant: np.ndarray
    kernel: np.ndarray
    errors: dict
    particles: np.ndarray


def bimodal_pdf(x, separation=1.0, variance=0.2):
    return 0.5 * gaussian_pdf(x, -separation, variance) + 0.5 * gaussian_pdf(x, separation, variance)


def weighted_l2_error(grid, values, reference, weight):
    d = (np.asarray(values) - np.asarray(reference)) ** 2 * weight
    return float(np.sqrt(np.trapezoid(d, grid)))


def run_example1(seed=0, n_particles=200, epsilons=(0.05, 0.2, 1.0), grid=None,
                 kernel_bandwidth=DEFAULT_KERNEL_BANDWIDTH, kernel_tol=DEFAULT_KERNEL_TOL,
                 kernel_max_iter=None):
    """Compare gains for ``h(x) = x`` on ``0.5 N(-1, 0.2) + 0.5 N(1, 0.2)``.

    The exact gain is computed by quadrature on a wider grid (so the density
    vanishes at its ends) and sampled at the ``[-3, 3]`` evaluation grid.
    """
    grid = np.linspace(-3.0, 3.0, 601) if grid is None else np.asarray(grid, dtype=float)
    rng = np.random.default_rng(seed)
    sign = np.where(rng.random(n_particles) < 0.5, -1.0, 1.0)
    x = sign + np.sqrt(0.2) * rng.standard_normal(n_particles)
    h = HermiteSeries([0.0, 0.5])

    lo, hi = min(grid[0], -7.0), max(grid[-1], 7.0)
    wide = np.linspace(lo, hi, 2801)
    exact = exact_gain_quadrature(lambda y: y, bimodal_pdf, wide)(grid)
    weight = bimodal_pdf(grid)

    decomp = {}
    errors = {}
    for eps in epsilons:
        g = build_gain(h, MixtureDensity(ParticleEnsemble(x), eps))
        decomp[float(eps)] = gain_eval(g, grid)
        errors[f"decomposition(eps={float(eps):g})"] = weighted_l2_error(grid, decomp[float(eps)],
                                                                         exact, weight)
    const = np.full_like(grid, constant_gain(h, x))
    errors["constant"] = weighted_l2_error(grid, const, exact, weight)
    kg = kernel_gain(h(x), x, kernel_bandwidth, kernel_tol, kernel_max_iter)
    order = np.argsort(x)
    kern = np.interp(grid, x[order], kg.gains[order])
    errors["kernel"] = weighted_l2_error(grid, kern, exact, weight)
    errors["exact"] = weighted_l2_error(grid, exact, exact, weight)
    return Example1Result(grid, exact, decomp, const, kern, errors, x)


# -- CPU scaling -------------------------------------------------------------

@dataclass(frozen=True)
class ScalingResult:
    """Median wall times per parameter value with a least-squares line."""

    parameter: str
    values: tuple
    seconds: tuple
    slope: float
    intercept: float
    r_squared: float

    def ratio(self, high, low):
        s = dict(zip(self.values, self.seconds))
        return s[high] / s[low]


def linear_fit(x, y):
    """Slope, intercept and coefficient of determination."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(min(max(r2, 0.0), 1.0))


def time_gain(h, x, epsilon=DEFAULT_EPSILON, repeats=20):
    """Median wall time of building the gain and evaluating it at every particle."""
    d = MixtureDensity(ParticleEnsemble(x), epsilon)
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        gain_eval(build_gain(h, d), d.positions)
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def _scaling(parameter, values, make, repeats):
    # one untimed pass warms caches and lazily built tables
    for v in values:
        time_gain(*make(v), repeats=1)
    secs = tuple(time_gain(*make(v), repeats=repeats) for v in values)
    slope, intercept, r2 = linear_fit(values, secs)
    return ScalingResult(parameter, tuple(values), secs, slope, intercept, r2)


def run_scaling_degree(seed=0, n_particles=50, degrees=(1, 5, 10, 30, 50, 100),
                       epsilon=DEFAULT_EPSILON, repeats=20):
    """Time the gain for ``h = H_d`` at each degree ``d``."""
    x = np.random.default_rng(seed).standard_normal(n_particles)
    return _scaling("degree", tuple(degrees),
                    lambda d: (HermiteSeries.basis(d), x, epsilon), repeats)


def run_scaling_particles(seed=0, counts=(5, 10, 20, 30, 50, 100), epsilon=DEFAULT_EPSILON,
                          repeats=20):
    """Time the gain for ``h(x) = x`` at each ensemble size."""
    rng = np.random.default_rng(seed)
    pools = {n: rng.standard_normal(n) for n in counts}
    h = HermiteSeries([0.0, 0.5])
    return _scaling("n_particles", tuple(counts), lambda n: (h, pools[n], epsilon), repeats)


# -- Monte-Carlo benchmark ---------------------------------------------------

@dataclass(frozen=True)
class RunMetrics:
    run_index: int
    method: str
    mse_sum: float
    per_step_rmse: float
    cpu_seconds: float
    tracked: bool = True


@dataclass(frozen=True)
class McSummary:
    method: str
    runs: int
    mean_mse: float
    tracked_count: int
    mean_cpu_seconds: float


@dataclass(frozen=True)
class BenchmarkConfig:
    """Settings of the Monte-Carlo benchmark.

    ``ito_correction`` controls the ``K K'/2`` term of the decomposition
    filter; ``kernel_check_every`` is the sweep block size of the kernel
    fixed-point solve.
    """

    n_particles: int = 50
    epsilon: float = DEFAULT_EPSILON
    dt: float = BENCHMARK_DT
    horizon: float = BENCHMARK_HORIZON
    mode: str = CONTINUOUS
    x0: float = BENCHMARK_X0
    ito_correction: bool = False
    kernel_bandwidth: float = DEFAULT_KERNEL_BANDWIDTH
    kernel_tol: float = DEFAULT_KERNEL_TOL
    kernel_max_iter: int = None
    kernel_check_every: int = 100
    substeps: int = 50

    def __post_init__(self):
        if self.n_particles < 1 or not self.epsilon > 0 or not self.dt > 0 or not self.horizon > 0:
            raise InvalidParameterError("n_particles, epsilon, dt and horizon must be positive")
        if self.mode not in (CONTINUOUS, DISCRETE):
            raise InvalidParameterError(f"unknown mode {self.mode!r}")

    @property
    def step(self):
        return 1.0 if self.mode == DISCRETE else self.dt

    @property
    def n_steps(self):
        return int(round(self.horizon / self.step))


@dataclass(frozen=True)
class BenchmarkResult:
    config: BenchmarkConfig
    methods: tuple
    runs: list = field(default_factory=list)
    summaries: list = field(default_factory=list)


def run_seeds(master_seed, run_index):
    """Generators for (truth, initial ensemble, one per method in ``METHODS``)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(run_index,))
    return [np.random.default_rng(s) for s in ss.spawn(2 + len(METHODS))]


def _make_method(name, cfg):
    if name == "decomposition":
        return DecompositionMethod(cfg.epsilon, ito_correction=cfg.ito_correction)
    if name == "constant":
        return ConstantGainMethod()
    if name == "kernel":
        return KernelMethod(cfg.kernel_bandwidth, cfg.kernel_tol, cfg.kernel_max_iter,
                            cfg.kernel_check_every)
    raise InvalidParameterError(f"unknown method {name!r}")


def run_single(master_seed, run_index, cfg=BenchmarkConfig(), methods=METHODS):
    """One realisation: the truth, the data and every method's estimates.

    Returns ``(data, {method: Trajectory or DivergenceError}, {method: cpu_seconds})``.
    """
    model = benchmark_model(cfg.mode)
    rngs = run_seeds(master_seed, run_index)
    data = simulate(model, cfg.x0, cfg.step, cfg.n_steps, rngs[0])
    fcfg = FilterConfig(n_particles=cfg.n_particles, substeps=cfg.substeps)
    initial = fcfg.initial_mean + np.sqrt(fcfg.initial_variance) * rngs[1].standard_normal(
        cfg.n_particles)
    out, cpu = {}, {}
    for name in methods:
        rng = rngs[2 + METHODS.index(name)]
        t0 = time.process_time()
        try:
            if name == "pf":
                out[name] = run_pf(model, data, fcfg, rng=rng, initial=initial)
            else:
                out[name] = run_fpf(model, data, _make_method(name, cfg), fcfg, rng=rng,
                                    initial=initial)
        except DivergenceError as err:
            out[name] = err
        cpu[name] = time.process_time() - t0
    return data, out, cpu


def summarize(records, methods):
    """Per-method aggregates; a run is tracked when its MSE is finite and at
    most ``TRACK_FACTOR`` times the method's median MSE."""
    by_method = {m: sorted((r for r in records if r.method == m), key=lambda r: r.run_index)
                 for m in methods}
    flagged, summaries = [], []
    for m in methods:
        rs = by_method[m]
        if not rs:
            continue
        errs = np.array([r.mse_sum for r in rs])
        limit = TRACK_FACTOR * np.median(errs)
        ok = [bool(np.isfinite(e) and e <= limit) for e in errs]
        rs = [RunMetrics(r.run_index, r.method, r.mse_sum, r.per_step_rmse, r.cpu_seconds, t)
              for r, t in zip(rs, ok)]
        flagged.extend(rs)
        tracked = [r.mse_sum for r in rs if r.tracked]
        summaries.append(McSummary(
            m, len(rs), float(np.mean(tracked)) if tracked else float("nan"), len(tracked),
            float(np.mean([r.cpu_seconds for r in rs]))))
    flagged.sort(key=lambda r: (r.run_index, methods.index(r.method)))
    return flagged, summaries


def run_metrics(master_seed, run_index, cfg=BenchmarkConfig(), methods=METHODS):
    """:class:`RunMetrics` of one realisation, one entry per method."""
    data, out, cpu = run_single(master_seed, run_index, cfg, methods)
    idx = unit_time_indices(data.times)
    rows = []
    for m in methods:
        tr = out[m]
        if isinstance(tr, DivergenceError):
            total, rmse = float("inf"), float("inf")
        else:
            total, rmse = mse(data.truth[idx], tr.estimates[idx])
        rows.append(RunMetrics(run_index, m, total, rmse, cpu[m]))
    return rows


def default_workers():
    """Worker processes for Monte-Carlo sweeps: ``FPFDECOMP_WORKERS`` or 1."""
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise InvalidParameterError(f"{WORKERS_ENV} must be an integer") from None


def run_benchmark_mc(master_seed=0, runs=100, methods=METHODS, cfg=BenchmarkConfig(),
                     progress=None, workers=None):
    """Monte-Carlo comparison on the growth model.

    MSE is summed over the unit sampling times ``t = 1 .. horizon``; a run
    whose filter diverges gets an infinite MSE and is never tracked. Every
    run draws from its own seed streams, so the result does not depend on
    ``workers``.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise InvalidParameterError(f"unknown method {m!r}; choose from {METHODS}")
    workers = default_workers() if workers is None else int(workers)
    records = []
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_metrics, master_seed, k, cfg, methods)
                       for k in range(int(runs))]
            for k, fut in enumerate(futures):
                records.extend(fut.result())
                if progress is not None:
                    progress(k)
    else:
        for k in range(int(runs)):
            records.extend(run_metrics(master_seed, k, cfg, methods))
            if progress is not None:
                progress(k)
    flagged, summaries = summarize(records, methods)
    return BenchmarkResult(cfg, methods, flagged, summaries)


def summary_dict(s):
    return asdict(s)
