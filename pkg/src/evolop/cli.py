"""Command-line entry point.

    evolop generate|fit|spectrum|forecast|benchmark --config CONFIG.json [--out DIR]

Config layout (every section optional unless a command needs it)::

    {
      "dataset":    {"system": {...}, "T": 1000, "seed": 0, "x0": [...], "lag": 1, "format": "csv"},
      "kernel":     {"family": "gaussian", "lengthscale": 1.0},
      "estimator":  {"method": "rrr", "rank": 5, "tikhonov": 1e-6},
      "evaluation": {"horizons": [1, 5], "grid": [[0.0], [0.5]], "method": "rollout"},
      "paths":      {"trajectory": "traj.csv", "model": "model.evm", "grid": "grid.csv"},
      "benchmark":  {"suite": "fit_time", "params": {...}}
    }

Relative paths are resolved against the config file's directory. Exit codes:
0 success, 2 config, 3 simulation, 4 numerical, 5 corrupt artifact,
6 non-converged ground truth.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from evolop import benchmarks
from evolop.datasets import SystemSpec, read_trajectory, simulate, write_binary, write_csv
from evolop.estimators import EstimatorConfig, build_pairs, fit
from evolop.exceptions import ConfigError, EvolopError
from evolop.io import load_model, read_header, save_model
from evolop.kernels import KernelSpec
from evolop.metrics import forecast_rmse
from evolop.spectral import eig_decomposition, eigenfunctions_csv

logger = logging.getLogger("evolop")

COMMANDS = ("generate", "fit", "spectrum", "forecast", "benchmark")
SECTIONS = ("dataset", "kernel", "estimator", "evaluation", "paths", "benchmark")


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _section(cfg, name):
    if name not in cfg:
        raise ConfigError(f"config needs a '{name}' section for this command")
    return cfg[name]


def _path(cfg, key, base, must_exist=True):
    paths = cfg.get("paths", {})
    if key not in paths:
        raise ConfigError(f"config needs paths.{key}")
    p = Path(paths[key])
    p = p if p.is_absolute() else base / p
    if must_exist and not p.exists():
        raise ConfigError(f"{key} file not found: {p}")
    return p


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _dataset(cfg):
    ds = _section(cfg, "dataset")
    unknown = set(ds) - {"system", "T", "seed", "x0", "lag", "format"}
    if unknown:
        raise ConfigError(f"unknown dataset keys: {sorted(unknown)}")
    spec = SystemSpec.from_dict(ds.get("system"))
    for key in ("T", "x0"):
        if key not in ds:
            raise ConfigError(f"dataset.{key} is required")
    fmt = ds.get("format", "csv")
    if fmt not in ("csv", "binary"):
        raise ConfigError(f"dataset.format must be 'csv' or 'binary', got {fmt!r}")
    return spec, ds


def cmd_generate(cfg, out, base):
    spec, ds = _dataset(cfg)
    traj = simulate(spec, ds["x0"], ds["T"], ds.get("seed", 0))
    fmt = ds.get("format", "csv")
    target = out / ("trajectory.csv" if fmt == "csv" else "trajectory.bin")
    if fmt == "csv":
        write_csv(traj.values, target, traj.dt)
    else:
        write_binary(traj.values, target)
    _write_json(out / "generate_manifest.json", {"config": cfg, "trajectory": str(target), **traj.manifest()})
    return target


def cmd_fit(cfg, out, base):
    values = read_trajectory(_path(cfg, "trajectory", base))
    lag = int(cfg.get("dataset", {}).get("lag", 1))
    kernel = KernelSpec.from_dict(_section(cfg, "kernel"))
    config = EstimatorConfig.from_dict(_section(cfg, "estimator"))
    pairs = build_pairs(values, lag)
    t0 = time.perf_counter()
    model = fit(config, kernel, pairs)
    wall = time.perf_counter() - t0
    target = out / "model.evm"
    provenance = {"config": cfg, "fit_seconds": wall, "n_samples": pairs.n_samples}
    save_model(model, target, provenance)
    _write_json(out / "fit_manifest.json", {**provenance, "model": str(target), "rank": model.rank})
    return target


def _grid(cfg, base, dim):
    """Evaluation points from ``paths.grid`` (CSV, one point per row) or ``evaluation.grid``."""
    if "grid" in cfg.get("paths", {}):
        path = _path(cfg, "grid", base)
        try:
            g = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError:
            g = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    elif "grid" in cfg.get("evaluation", {}):
        g = np.asarray(cfg["evaluation"]["grid"], dtype=float)
    else:
        return None
    g = g.reshape(-1, dim) if g.ndim == 1 else g
    if g.shape[1] != dim:
        raise ConfigError(f"grid has {g.shape[1]} columns, model dimension is {dim}")
    return g


def cmd_spectrum(cfg, out, base):
    model_path = _path(cfg, "model", base)
    model = load_model(model_path)
    decomp = eig_decomposition(model)
    dt = float(cfg.get("evaluation", {}).get("dt", 1.0))
    report = {"config": cfg, "model": str(model_path), "model_header": read_header(model_path)["config"]}
    report.update(decomp.to_dict(dt))
    grid = _grid(cfg, base, model.dim)
    if grid is not None:
        csv_path = out / "eigenfunctions.csv"
        eigenfunctions_csv(decomp, grid, csv_path)
        report["eigenfunctions_csv"] = str(csv_path)
    target = out / "spectrum.json"
    _write_json(target, report)
    return target


def cmd_forecast(cfg, out, base):
    model = load_model(_path(cfg, "model", base))
    ev = cfg.get("evaluation", {})
    horizons = ev.get("horizons", [1])
    method = ev.get("method", "rollout")
    test = read_trajectory(_path(cfg, "trajectory", base))
    report = forecast_rmse(model, test, horizons, method=method)
    target = out / "forecast.json"
    _write_json(target, {"config": cfg, **report.to_dict()})
    return target


def _records_csv(records, path):
    keys = [k for k in records[0] if not isinstance(records[0][k], (list, dict))]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(records)


def cmd_benchmark(cfg, out, base):
    bench = _section(cfg, "benchmark")
    suite = bench.get("suite")
    runners = {"eigfn_accuracy": benchmarks.eigfn_accuracy, "fit_time": benchmarks.fit_time}
    if suite not in runners:
        raise ConfigError(f"benchmark.suite must be one of {sorted(runners)}, got {suite!r}")
    result = runners[suite](bench.get("params"))
    result["config"] = cfg
    target = out / f"benchmark_{suite}.json"
    _write_json(target, result)
    if result["records"]:
        _records_csv(result["records"], out / f"benchmark_{suite}.csv")
    return target


def _thread_limit():
    value = os.environ.get("EVOLOP_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError as exc:
        raise ConfigError(f"EVOLOP_THREADS must be an integer, got {value!r}") from exc
    if n < 1:
        raise ConfigError("EVOLOP_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def build_parser():
    parser = argparse.ArgumentParser(prog="evolop", description="Learn and analyze evolution operators.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="experiment JSON")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {
        "generate": cmd_generate,
        "fit": cmd_fit,
        "spectrum": cmd_spectrum,
        "forecast": cmd_forecast,
        "benchmark": cmd_benchmark,
    }
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with _thread_limit():
            target = handlers[args.command](cfg, out, Path(args.config).resolve().parent)
    except EvolopError as exc:
        print(f"evolop {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(target)
    return 0


if __name__ == "__main__":
    sys.exit(main())
