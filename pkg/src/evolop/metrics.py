"""Scores for learned operators: spectra, eigenfunctions, VAMP-2 and forecasts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
from scipy.optimize import linear_sum_assignment

from evolop.exceptions import ConfigError, NumericalError, SingularSystemError


@dataclass(frozen=True)
class ScoreReport:
    """A scalar score plus per-item details.

    ``details`` keys by metric:

    - ``spectral_error``: ``directed_est_to_ref``, ``directed_ref_to_est``, and
      ``assignment`` (max matched distance) when both sets have equal size.
    - ``forecast_rmse``: ``horizons`` and ``rmse`` (one entry per horizon).
    """

    name: str
    value: float
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NumericalError(f"{self.name} is not finite")

    def to_dict(self):
        return {"metric": self.name, "value": float(self.value), "details": self.details}

    def to_json(self):
        return json.dumps(self.to_dict())


def _complex_set(values, name):
    values = np.asarray(values)
    if values.ndim == 2 and values.shape[1] == 2 and not np.iscomplexobj(values):
        values = values[:, 0] + 1j * values[:, 1]
    values = np.asarray(values, dtype=complex).reshape(-1)
    if values.size == 0:
        raise ConfigError(f"{name} is empty")
    return values


def spectral_error_report(estimated, reference) -> ScoreReport:
    a = _complex_set(estimated, "estimated")
    b = _complex_set(reference, "reference")
    D = np.abs(a[:, None] - b[None, :])
    ab = float(D.min(axis=1).max())
    ba = float(D.min(axis=0).max())
    details = {"directed_est_to_ref": ab, "directed_ref_to_est": ba}
    if a.size == b.size:
        rows, cols = linear_sum_assignment(D)
        details["assignment"] = float(D[rows, cols].max())
    return ScoreReport("spectral_error", max(ab, ba), details)


def spectral_error(estimated, reference) -> float:
    """Symmetric Hausdorff distance between two finite subsets of the complex plane."""
    return spectral_error_report(estimated, reference).value


def eigfn_error(estimated, reference, weights) -> float:
    """``1 - |<a, b>_w| / (|a|_w |b|_w)``, invariant to complex rescaling of either argument."""
    a = np.asarray(estimated, dtype=complex).reshape(-1)
    b = np.asarray(reference, dtype=complex).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if not a.size == b.size == w.size:
        raise ConfigError(f"grid lengths differ: {a.size}, {b.size}, {w.size}")
    if np.any(w < 0) or not np.any(w > 0):
        raise ConfigError("weights must be nonnegative and not all zero")
    na = np.sqrt(np.sum(w * np.abs(a) ** 2))
    nb = np.sqrt(np.sum(w * np.abs(b) ** 2))
    if na == 0 or nb == 0:
        raise NumericalError("eigenfunction has zero weighted norm")
    cos = abs(np.sum(w * np.conj(a) * b)) / (na * nb)
    return float(np.clip(1.0 - cos, 0.0, 1.0))


def _inv_sqrt(C, name):
    w, Q = sl.eigh(C)
    if w[0] <= 1e-12 * max(w[-1], np.finfo(float).tiny):
        raise SingularSystemError(f"{name} covariance is singular; increase tikhonov")
    return (Q / np.sqrt(w)) @ Q.T


def vamp2_score(pairs, feature_values_X, feature_values_Y, rank, tikhonov=0.0) -> float:
    """Sum of the top-``rank`` squared singular values of the whitened cross-covariance.

    Covariances are centered. ``pairs`` is only used for its sample count and
    may be ``None``.
    """
    FX = np.asarray(feature_values_X, dtype=float)
    FY = np.asarray(feature_values_Y, dtype=float)
    if FX.ndim == 1:
        FX = FX[:, None]
    if FY.ndim == 1:
        FY = FY[:, None]
    if FX.shape[0] != FY.shape[0]:
        raise ConfigError("feature matrices must have the same number of rows")
    if pairs is not None and pairs.n_samples != FX.shape[0]:
        raise ConfigError("feature rows do not match the snapshot pairs")
    if int(rank) != rank or not 1 <= rank <= min(FX.shape[1], FY.shape[1]):
        raise ConfigError(f"rank must be in [1, k], got {rank}")
    if tikhonov < 0:
        raise ConfigError("tikhonov must be nonnegative")
    n = FX.shape[0]
    FX = FX - FX.mean(axis=0)
    FY = FY - FY.mean(axis=0)
    C_X = FX.T @ FX / n + tikhonov * np.eye(FX.shape[1])
    C_Y = FY.T @ FY / n + tikhonov * np.eye(FY.shape[1])
    C_XY = FX.T @ FY / n
    T = _inv_sqrt(C_X, "X") @ C_XY @ _inv_sqrt(C_Y, "Y")
    s = np.linalg.svd(T, compute_uv=False)
    return float(np.sum(s[: int(rank)] ** 2))


def forecast_rmse(model, test, horizons, observable=None, method="rollout") -> ScoreReport:
    """Per-horizon RMSE over every start index of ``test`` with a valid target.

    Parameters
    ----------
    model : FittedOperator or callable
        A callable is treated as a predictor ``model(X0, h) -> (N, q)``.
    test : Trajectory or array of shape (T, d)
    horizons : list of int
    observable : array of shape (n_train, q), optional
        Observable on the model's training outputs paired with ``test_obs``
        values given as ``observable=(f_Y, test_values)``. Defaults to the state.
    method : {"rollout", "spectral"}

    The reported value is the RMSE at the largest horizon.
    """
    from evolop.spectral import eig_decomposition, forecast_batch

    values = np.asarray(getattr(test, "values", test), dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    horizons = [int(h) for h in horizons]
    if not horizons or min(horizons) < 1:
        raise ConfigError("horizons must be positive integers")
    T = values.shape[0]
    if max(horizons) >= T:
        raise ConfigError(f"horizon {max(horizons)} needs a test trajectory longer than {T}")
    f_Y, target = (None, values) if observable is None else observable
    target = np.asarray(target, dtype=float)
    if target.ndim == 1:
        target = target[:, None]

    H = max(horizons)
    starts = values[: T - min(horizons)]
    if callable(model) and not hasattr(model, "one_step"):
        preds = {h: np.asarray(model(values[: T - h], h), dtype=float).reshape(T - h, -1) for h in horizons}
    else:
        decomp = eig_decomposition(model) if method == "spectral" else None
        traj = forecast_batch(model, starts, f_Y, H, method, decomp)
        preds = {h: traj[h - 1, : T - h] for h in horizons}
    rmse = []
    for h in horizons:
        err = preds[h] - target[h:]
        rmse.append(float(np.sqrt(np.mean(err**2))))
    return ScoreReport("forecast_rmse", rmse[horizons.index(H)], {"horizons": horizons, "rmse": rmse})
