"""Benchmark suites: eigenfunction accuracy on Langevin data and fit-time scaling on Lorenz-63."""

from __future__ import annotations

import logging
import time

import numpy as np

from evolop.datasets import LangevinQuadWell, Lorenz63, SystemSpec, langevin_truth, simulate
from evolop.estimators import EstimatorConfig, SnapshotPair, build_pairs, fit
from evolop.exceptions import ConfigError, NonConvergedError
from evolop.kernels import KernelSpec
from evolop.metrics import eigfn_error
from evolop.spectral import eig_decomposition, eval_eigenfunctions

logger = logging.getLogger("evolop")

EIGFN_DEFAULTS = {
    "n": 5000,
    "seeds": [0, 1, 2, 3, 4],
    "beta_inv_temp": 1.0,
    "lag_time": 0.1,
    "dt": 1e-4,
    "x0": 0.0,
    "kernel": {"family": "gaussian", "lengthscale": 0.1},
    "methods": ["pcr", "rrr"],
    "rank": 5,
    "tikhonov": 1e-6,
    "n_eigenfunctions": 3,
    "grid": [-1.0, 1.0, 1000],
}

FIT_TIME_DEFAULTS = {
    "n_grid": [1000, 2000, 4000, 5000],
    "repetitions": 3,
    "seed": 0,
    "burn_in": 1000,
    "x0": [1.0, 1.0, 1.0],
    "system": {"name": "lorenz63"},
    "kernel": {"family": "gaussian", "lengthscale": 5.0},
    "estimators": {
        "rrr": {"method": "rrr", "rank": 10, "tikhonov": 1e-6},
        "rand_rrr": {"method": "rand_rrr", "rank": 10, "tikhonov": 1e-6, "oversample": 10, "power_iters": 1},
        "nystrom_rrr": {"method": "nystrom_rrr", "rank": 10, "tikhonov": 1e-6, "inducing": 250},
    },
}


def resolve(defaults, overrides):
    if overrides is None:
        overrides = {}
    if not isinstance(overrides, dict):
        raise ConfigError("benchmark parameters must be a JSON object")
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown benchmark keys: {sorted(unknown)}")
    return {**defaults, **overrides}


def langevin_samples(n, seed, beta_inv_temp=1.0, lag_time=0.1, dt=1e-4, x0=0.0):
    """``n`` snapshot pairs of the quadwell process sampled every ``lag_time``."""
    substeps = round(lag_time / dt)
    if substeps < 1 or abs(substeps * dt - lag_time) > 1e-9 * lag_time:
        raise ConfigError("lag_time must be a positive multiple of dt")
    spec = LangevinQuadWell(beta_inv_temp, dt, substeps)
    return build_pairs(simulate(spec, [x0], n + 1, seed), 1)


def eigfn_accuracy(params=None):
    """Score PCR and RRR eigenfunctions against the grid reference, per seed.

    Estimated eigenfunction ``j`` (eigenvalues sorted by modulus) is compared
    with reference eigenfunction ``j``; index 0 is the constant and skipped.
    """
    p = resolve(EIGFN_DEFAULTS, params)
    truth = langevin_truth(p["beta_inv_temp"], p["lag_time"], tuple(p["grid"]))
    if not truth.converged:
        raise NonConvergedError(f"ground truth not mesh-converged (drift {truth.meta['lambda1_drift']:.2e})")
    kernel = KernelSpec.from_dict(p["kernel"])
    idx = list(range(1, p["n_eigenfunctions"] + 1))
    if max(idx) >= p["rank"]:
        raise ConfigError("rank must exceed n_eigenfunctions")
    records = []
    for seed in p["seeds"]:
        pairs = langevin_samples(p["n"], seed, p["beta_inv_temp"], p["lag_time"], p["dt"], p["x0"])
        for method in p["methods"]:
            config = EstimatorConfig(method, rank=p["rank"], tikhonov=p["tikhonov"])
            decomp = eig_decomposition(fit(config, kernel, pairs))
            psi = eval_eigenfunctions(decomp, truth.grid[:, None])
            for j in idx:
                err = eigfn_error(psi[:, j], truth.eigenfunctions[:, j], truth.invariant_density)
                lam = decomp.eigenvalues[j]
                records.append(
                    {
                        "method": method,
                        "seed": seed,
                        "eigenfunction": j,
                        "eigfn_error": err,
                        "eigenvalue": [float(lam.real), float(lam.imag)],
                        "reference_eigenvalue": float(truth.eigenvalues[j].real),
                    }
                )
            logger.info("eigfn_accuracy seed=%s method=%s done", seed, method)
    medians = {
        m: {str(j): float(np.median([r["eigfn_error"] for r in records if r["method"] == m and r["eigenfunction"] == j])) for j in idx}
        for m in p["methods"]
    }
    return {
        "suite": "eigfn_accuracy",
        "params": p,
        "reference": {
            "eigenvalues": truth.eigenvalues.real.tolist()[: max(idx) + 1],
            "lambda1_drift": truth.meta["lambda1_drift"],
            "converged": truth.converged,
        },
        "records": records,
        "median_eigfn_error": medians,
    }


def lorenz_pairs(n, seed=0, burn_in=1000, x0=(1.0, 1.0, 1.0), system=None):
    spec = SystemSpec.from_dict(system) if system else Lorenz63()
    traj = simulate(spec, x0, burn_in + n + 1, seed)
    return build_pairs(traj.values[burn_in:], 1)


def time_fit(config, kernel, pairs, repetitions):
    """Wall-clock times of ``fit`` (Gram assembly included)."""
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fit(config, kernel, pairs)
        times.append(time.perf_counter() - t0)
    return times


def fit_time(params=None):
    """Median fit time per (estimator, n) over ``repetitions`` runs."""
    p = resolve(FIT_TIME_DEFAULTS, params)
    if int(p["repetitions"]) < 1:
        raise ConfigError("repetitions must be >= 1")
    kernel = KernelSpec.from_dict(p["kernel"])
    configs = {name: EstimatorConfig.from_dict(c) for name, c in p["estimators"].items()}
    n_max = max(p["n_grid"])
    full = lorenz_pairs(n_max, p["seed"], p["burn_in"], p["x0"], p["system"])
    records = []
    for n in sorted(p["n_grid"]):
        pairs = SnapshotPair(full.X[:n], full.Y[:n], 1)
        for name, config in configs.items():
            times = time_fit(config, kernel, pairs, int(p["repetitions"]))
            records.append({"estimator": name, "n": n, "times": times, "median": float(np.median(times))})
            logger.info("fit_time %s n=%d median %.3fs", name, n, records[-1]["median"])
    return {"suite": "fit_time", "params": p, "records": records}
