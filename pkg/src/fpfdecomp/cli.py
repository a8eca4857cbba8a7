"""Command-line front end for the experiments in :mod:`fpfdecomp.bench`.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
configuration error. Data goes to ``--out`` (stdout by default); human
readable summaries go to stderr.
"""

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import bench
from .exceptions import (ConsistencyError, DivergenceError, InvalidModelError,
                         InvalidParameterError, SingularDensityError)
from .filters import CONTINUOUS, MODES

EXPERIMENTS = ("gain", "filter", "mc", "scaling")
FORMATS = ("csv", "json")
GAIN_EPSILONS = (0.05, 0.2, 1.0)


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings shared by all experiments.

    ``epsilon`` is a tuple; the gain experiment uses every entry, the others
    need exactly one. ``None`` selects the experiment's default.
    """

    experiment: str = "filter"
    seed: int = 0
    np: int = 50
    epsilon: tuple = None
    dt: float = bench.BENCHMARK_DT
    horizon: float = bench.BENCHMARK_HORIZON
    runs: int = 100
    methods: tuple = bench.METHODS
    mode: str = CONTINUOUS
    format: str = "csv"
    out: str = "-"
    summary: str = None
    workers: int = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: expected one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format: expected one of {FORMATS}, got {self.format!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {MODES}, got {self.mode!r}")
        for name in ("seed", "np", "runs"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"{name}: expected an integer, got {v!r}")
        if self.seed < 0:
            raise ConfigError("seed: must be non-negative")
        if self.np < 1:
            raise ConfigError("np: must be at least 1")
        if self.runs < 0:
            raise ConfigError("runs: must be non-negative")
        for name in ("dt", "horizon"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not v > 0 or not np.isfinite(v):
                raise ConfigError(f"{name}: must be a positive number, got {v!r}")
        if self.epsilon is not None:
            eps = tuple(self.epsilon) if isinstance(self.epsilon, (list, tuple)) else (self.epsilon,)
            if not eps or any(not isinstance(e, (int, float)) or not e > 0 for e in eps):
                raise ConfigError(f"epsilon: values must be positive, got {self.epsilon!r}")
            object.__setattr__(self, "epsilon", tuple(float(e) for e in eps))
            if self.experiment != "gain" and len(eps) != 1:
                raise ConfigError("epsilon: this experiment takes a single value")
        methods = self.methods
        if isinstance(methods, str):
            methods = [m for m in methods.split(",") if m]
        methods = tuple(methods)
        if not methods or any(m not in bench.METHODS for m in methods):
            raise ConfigError(f"methods: expected a subset of {bench.METHODS}, got {self.methods!r}")
        if len(set(methods)) != len(methods):
            raise ConfigError("methods: duplicates are not allowed")
        object.__setattr__(self, "methods", methods)
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ConfigError("workers: must be a positive integer")

    @property
    def epsilons(self):
        if self.epsilon is not None:
            return self.epsilon
        return GAIN_EPSILONS if self.experiment == "gain" else (bench.DEFAULT_EPSILON,)

    def benchmark_config(self):
        try:
            return bench.BenchmarkConfig(n_particles=self.np, epsilon=self.epsilons[0],
                                         dt=self.dt, horizon=self.horizon, mode=self.mode)
        except InvalidParameterError as err:
            raise ConfigError(str(err)) from None

    @classmethod
    def from_mapping(cls, data, base=None):
        """Overlay ``data`` (e.g. a parsed config file) on ``base``."""
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"config: unknown keys {unknown}")
        return replace(base or cls(), **data)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def to_csv(header, rows):
    """CSV text with LF line endings and round-trip exact floats."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_default(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def to_json(doc):
    return json.dumps(doc, indent=2, default=_json_default, allow_nan=True) + "\n"


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _config_doc(cfg):
    d = asdict(cfg)
    d["epsilon"] = list(cfg.epsilons)
    d["methods"] = list(cfg.methods)
    return d


def cmd_gain(cfg):
    res = bench.run_example1(cfg.seed, n_particles=cfg.np, epsilons=cfg.epsilons)
    names = [f"decomposition_eps_{e:g}" for e in cfg.epsilons]
    header = ["x", "exact"] + names + ["constant", "kernel"]
    cols = [res.grid, res.exact] + [res.decomposition[e] for e in cfg.epsilons] \
        + [res.constant, res.kernel]
    errs = [res.errors[f"decomposition(eps={e:g})"] for e in cfg.epsilons]
    footer = ["weighted_l2_error", res.errors["exact"]] + errs \
        + [res.errors["constant"], res.errors["kernel"]]
    if cfg.format == "csv":
        _write(cfg.out, to_csv(header, list(zip(*cols)) + [footer]))
    else:
        doc = {"config": _config_doc(cfg), "columns": dict(zip(header, cols)),
               "weighted_l2_error": dict(zip(header[1:], footer[1:]))}
        _write(cfg.out, to_json(doc))
    for name, err in zip(header[1:], footer[1:]):
        print(f"{name:>28s}  weighted L2 error {err:.6g}", file=sys.stderr)
    return 0


def cmd_filter(cfg):
    bcfg = cfg.benchmark_config()
    data, out, _ = bench.run_single(cfg.seed, 0, bcfg, cfg.methods)
    failed = [(m, tr) for m, tr in out.items() if isinstance(tr, DivergenceError)]
    if failed:
        for m, err in failed:
            print(f"error: {m} diverged at step {err.step}", file=sys.stderr)
        return 1
    idx = bench.unit_time_indices(data.times)
    header = ["t", "truth", "observation"] + list(cfg.methods)
    cols = [data.times, data.truth, data.observations] + [out[m].estimates for m in cfg.methods]
    scores = {m: bench.mse(data.truth[idx], out[m].estimates[idx]) for m in cfg.methods}
    if cfg.format == "csv":
        _write(cfg.out, to_csv(header, zip(*cols)))
    else:
        doc = {"config": _config_doc(cfg), "columns": dict(zip(header, cols)),
               "mse": {m: {"mse_sum": s[0], "per_step_rmse": s[1]} for m, s in scores.items()}}
        _write(cfg.out, to_json(doc))
    for m, (total, rmse) in scores.items():
        print(f"{m:>14s}  mse_sum {total:.6g}  per_step_rmse {rmse:.6g}", file=sys.stderr)
    return 0


MC_HEADER = ["run_index", "method", "mse_sum", "per_step_rmse", "cpu_seconds", "tracked"]


def mc_summary_doc(cfg, result):
    return {"config": _config_doc(cfg),
            "methods": [asdict(s) for s in result.summaries],
            "paper_reference": bench.PAPER_REFERENCE}


def cmd_mc(cfg):
    result = bench.run_benchmark_mc(cfg.seed, cfg.runs, cfg.methods, cfg.benchmark_config(),
                                    workers=cfg.workers)
    doc = mc_summary_doc(cfg, result)
    if cfg.format == "csv":
        rows = [[getattr(r, k) for k in MC_HEADER] for r in result.runs]
        _write(cfg.out, to_csv(MC_HEADER, rows))
        if cfg.summary:
            _write(cfg.summary, to_json(doc))
    else:
        _write(cfg.out, to_json(doc))
    print(f"{'method':>14s} {'runs':>5s} {'tracked':>8s} {'mean_mse':>12s} {'paper':>9s} "
          f"{'cpu_s':>8s} {'paper':>6s}", file=sys.stderr)
    for s in result.summaries:
        ref = bench.PAPER_REFERENCE[s.method]
        print(f"{s.method:>14s} {s.runs:5d} {s.tracked_count:8d} {s.mean_mse:12.2f} "
              f"{ref['mean_mse']:9.2f} {s.mean_cpu_seconds:8.3f} {ref['mean_cpu_seconds']:6.2f}",
              file=sys.stderr)
    return 0


def cmd_scaling(cfg):
    scans = [bench.run_scaling_degree(cfg.seed, n_particles=cfg.np, epsilon=cfg.epsilons[0]),
             bench.run_scaling_particles(cfg.seed, epsilon=cfg.epsilons[0])]
    doc = {"config": _config_doc(cfg),
           "scans": {s.parameter: {"values": list(s.values), "seconds": list(s.seconds),
                                   "slope": s.slope, "intercept": s.intercept,
                                   "r_squared": s.r_squared} for s in scans}}
    if cfg.format == "csv":
        rows = [[s.parameter, v, t] for s in scans for v, t in zip(s.values, s.seconds)]
        _write(cfg.out, to_csv(["scan", "value", "seconds"], rows))
        if cfg.summary:
            _write(cfg.summary, to_json(doc))
    else:
        _write(cfg.out, to_json(doc))
    for s in scans:
        print(f"{s.parameter:>12s}  slope {s.slope:.3e} s/unit  R^2 {s.r_squared:.4f}",
              file=sys.stderr)
    return 0


COMMANDS = {"gain": cmd_gain, "filter": cmd_filter, "mc": cmd_mc, "scaling": cmd_scaling}


def build_parser():
    d = ExperimentConfig()
    p = argparse.ArgumentParser(
        prog="fpfdecomp",
        description="Feedback particle filter experiments: gain accuracy (gain), a single "
                    "filtering run (filter), the Monte-Carlo benchmark (mc) and CPU scaling "
                    "(scaling). Settings are taken from defaults, then --config, then flags.")
    a = p.add_argument
    # defaults are applied after merging with --config, so argparse sees None
    a("--experiment", choices=EXPERIMENTS, help=f"experiment to run (default: {d.experiment})")
    a("--seed", type=int, help=f"master seed (default: {d.seed})")
    a("--np", type=int, help=f"number of particles (default: {d.np}; the gain experiment "
                              "uses 200 unless set)")
    a("--epsilon", type=float, nargs="+",
      help=f"kernel variance(s) (default: {bench.DEFAULT_EPSILON}; gain experiment: "
           f"{' '.join(f'{e:g}' for e in GAIN_EPSILONS)})")
    a("--dt", type=float, help=f"time step of continuous mode (default: {d.dt})")
    a("--horizon", type=float, help=f"final time T (default: {d.horizon:g})")
    a("--runs", type=int, help=f"Monte-Carlo runs (default: {d.runs})")
    a("--methods", help=f"comma-separated subset of {','.join(bench.METHODS)} "
                        f"(default: {','.join(d.methods)})")
    a("--mode", choices=MODES, help=f"benchmark time stepping (default: {d.mode})")
    a("--format", choices=FORMATS, help=f"output format (default: {d.format})")
    a("--out", help="output path, '-' for stdout (default: -)")
    a("--summary", help="mc and scaling with csv output: also write the JSON summary here "
                        "(default: not written)")
    a("--workers", type=int, help=f"worker processes for mc (default: ${bench.WORKERS_ENV} or 1)")
    a("--config", help="JSON file whose keys are the long flag names without dashes; "
                       "flags given on the command line override it (default: none)")
    return p


def resolve_config(args):
    """Merge defaults, the optional config file and explicit flags."""
    cfg_values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"config: cannot read {args.config}: {err}") from None
        if not isinstance(cfg_values, dict):
            raise ConfigError("config: top level must be an object")
    flags = {k: v for k, v in vars(args).items() if v is not None and k != "config"}
    merged = {**cfg_values, **flags}
    experiment = merged.get("experiment", ExperimentConfig.experiment)
    if experiment == "gain" and "np" not in merged:
        merged["np"] = 200
    try:
        return ExperimentConfig.from_mapping(merged)
    except TypeError as err:
        raise ConfigError(f"config: {err}") from None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[cfg.experiment](cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DivergenceError as err:
        print(f"error: {err.method or 'filter'} diverged at step {err.step}", file=sys.stderr)
        return 1
    except (InvalidParameterError, InvalidModelError, ConsistencyError,
            SingularDensityError, FloatingPointError, OverflowError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
