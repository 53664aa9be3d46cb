"""Estimators of the evolution operator from time-lagged snapshot pairs.

All kernel estimators produce a :class:`FittedOperator`, a finite-rank
operator stored in dual coordinates. An observable ``f`` known through its
values ``f_Y`` on the training outputs is propagated one step as::

    f_hat(x) = k(x, X_train) @ U @ (V.T @ f_Y)

For Nystrom models the kernel row is taken against the inducing inputs and
``f_Y`` is restricted to the inducing outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from evolop.estimators._dual import (
    pcr_dual_solve,
    randomized_rrr_solve,
    ridge_dual_solve,
    rrr_dual_solve,
)
from evolop.estimators._nystrom import nystrom_solve, select_centers
from evolop.estimators._primal import (
    IdentityFeatures,
    PrimalOperator,
    RandomFourierFeatures,
    fit_primal_oracle,
)
from evolop.exceptions import ConfigError
from evolop.kernels import KernelSpec, as_data_matrix, gram_matrix

__all__ = [
    "METHODS",
    "SnapshotPair",
    "EstimatorConfig",
    "FittedOperator",
    "PrimalOperator",
    "IdentityFeatures",
    "RandomFourierFeatures",
    "build_pairs",
    "fit",
    "fit_primal_oracle",
    "nystrom_fit",
    "pcr_dual_solve",
    "randomized_rrr_solve",
    "ridge_dual_solve",
    "rrr_dual_solve",
]

METHODS = ("ridge", "pcr", "rrr", "rand_rrr", "nystrom_pcr", "nystrom_rrr")


@dataclass(frozen=True)
class SnapshotPair:
    X: np.ndarray
    Y: np.ndarray
    lag: int = 1

    def __post_init__(self):
        X = as_data_matrix(self.X, "X")
        Y = as_data_matrix(self.Y, "Y")
        if X.shape != Y.shape:
            raise ConfigError(f"X and Y must have the same shape, got {X.shape} and {Y.shape}")
        if X.shape[0] < 2:
            raise ConfigError("at least two snapshot pairs are required")
        if int(self.lag) != self.lag or self.lag < 1:
            raise ConfigError(f"lag must be a positive integer, got {self.lag}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "lag", int(self.lag))

    @property
    def n_samples(self):
        return self.X.shape[0]


def build_pairs(trajectory, lag=1):
    """Split a (T, d) trajectory into pairs ``(x_t, x_{t+lag})``."""
    traj = np.asarray(getattr(trajectory, "values", trajectory), dtype=float)
    if traj.ndim == 1:
        traj = traj[:, None]
    if int(lag) != lag or lag < 1:
        raise ConfigError(f"lag must be a positive integer, got {lag}")
    T = traj.shape[0]
    if T <= lag:
        raise ConfigError(f"trajectory shorter than lag: T={T}, lag={lag}")
    return SnapshotPair(traj[: T - lag], traj[lag:], lag)


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator choice and hyperparameters.

    ``tikhonov`` is the ridge parameter gamma; Gram-space problems are
    regularized with ``n * gamma``. ``gamma = 0`` is accepted only if the
    system is nonsingular, unless ``pseudo_inverse`` is set.
    """

    method: str
    rank: int | None = None
    tikhonov: float = 1e-6
    oversample: int = 10
    power_iters: int = 1
    inducing: int | None = None
    seed: int = 0
    pseudo_inverse: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method != "ridge":
            if self.rank is None or int(self.rank) != self.rank or self.rank < 1:
                raise ConfigError(f"method {self.method!r} needs an integer rank >= 1, got {self.rank}")
            object.__setattr__(self, "rank", int(self.rank))
        if not (isinstance(self.tikhonov, (int, float)) and math.isfinite(self.tikhonov) and self.tikhonov >= 0):
            raise ConfigError(f"tikhonov must be a finite nonnegative number, got {self.tikhonov!r}")
        for name in ("oversample", "power_iters", "seed"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ConfigError(f"{name} must be a nonnegative integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.method.startswith("nystrom"):
            if self.inducing is None or int(self.inducing) != self.inducing or self.inducing < 1:
                raise ConfigError(f"method {self.method!r} needs inducing >= 1, got {self.inducing}")
            object.__setattr__(self, "inducing", int(self.inducing))
        object.__setattr__(self, "tikhonov", float(self.tikhonov))

    def to_dict(self):
        out = {"method": self.method, "tikhonov": self.tikhonov}
        if self.rank is not None:
            out["rank"] = self.rank
        if self.method == "rand_rrr":
            out.update(oversample=self.oversample, power_iters=self.power_iters, seed=self.seed)
        if self.method.startswith("nystrom"):
            out.update(inducing=self.inducing, seed=self.seed)
        if self.pseudo_inverse:
            out["pseudo_inverse"] = True
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "method" not in data:
            raise ConfigError(f"estimator config must be an object with a 'method' key, got {data!r}")
        allowed = {"method", "rank", "tikhonov", "oversample", "power_iters", "inducing", "seed", "pseudo_inverse"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown estimator keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in data.items() if v is not None}
        return cls(**kwargs)


def _readonly(a):
    if a is None:
        return None
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FittedOperator:
    """Finite-rank evolution operator in dual coordinates (immutable)."""

    kernel: KernelSpec
    config: EstimatorConfig
    X_train: np.ndarray = field(repr=False)
    Y_train: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    singular_values: np.ndarray | None = field(default=None, repr=False)
    centers: np.ndarray | None = field(default=None, repr=False)
    lag: int = 1

    def __post_init__(self):
        for name in ("X_train", "Y_train", "U", "V", "singular_values", "centers"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def n_samples(self):
        return self.X_train.shape[0]

    @property
    def dim(self):
        return self.X_train.shape[1]

    @property
    def X_centers(self):
        return self.X_train if self.centers is None else self.X_train[self.centers]

    @property
    def Y_centers(self):
        return self.Y_train if self.centers is None else self.Y_train[self.centers]

    def restrict(self, f_Y):
        """Observable values on the training outputs, restricted to the centers."""
        f_Y = np.asarray(f_Y, dtype=float)
        if f_Y.ndim == 1:
            f_Y = f_Y[:, None]
        if f_Y.shape[0] != self.n_samples:
            raise ConfigError(f"observable has {f_Y.shape[0]} rows, expected {self.n_samples}")
        return f_Y if self.centers is None else f_Y[self.centers]

    def kernel_rows(self, X_new, side="input"):
        X_new = as_data_matrix(X_new, "X_new")
        if X_new.shape[1] != self.dim:
            raise ConfigError(f"dimension mismatch: got {X_new.shape[1]} columns, model has {self.dim}")
        centers = self.X_centers if side == "input" else self.Y_centers
        return gram_matrix(self.kernel, X_new, centers)

    def one_step(self, X_new, f_Y=None):
        """``E f`` evaluated at the rows of ``X_new``; ``f`` defaults to the state."""
        f = self.restrict(self.Y_train if f_Y is None else f_Y)
        return self.kernel_rows(X_new) @ (self.U @ (self.V.T @ f))


def nystrom_fit(method, kernel, pairs, tikhonov, rank, inducing, seed=0, pseudo_inverse=False):
    config = EstimatorConfig(
        f"nystrom_{method}",
        rank=rank,
        tikhonov=tikhonov,
        inducing=inducing,
        seed=seed,
        pseudo_inverse=pseudo_inverse,
    )
    return fit(config, kernel, pairs)


def fit(config: EstimatorConfig, kernel: KernelSpec, pairs: SnapshotPair) -> FittedOperator:
    """Fit the evolution operator. Deterministic given its arguments (seeds included)."""
    n = pairs.n_samples
    X, Y = pairs.X, pairs.Y
    if config.rank is not None and config.rank > n:
        raise ConfigError(f"rank {config.rank} exceeds the number of samples {n}")
    gamma = config.tikhonov
    s2 = None
    centers = None

    if config.method.startswith("nystrom"):
        centers = select_centers(n, config.inducing, config.seed)
        U, V, s2 = nystrom_solve(
            config.method.split("_", 1)[1], kernel, X, Y, gamma, config.rank, centers, config.pseudo_inverse
        )
    else:
        K_X = gram_matrix(kernel, X)
        if config.method == "ridge":
            U, V = ridge_dual_solve(K_X, gamma, config.pseudo_inverse)
        elif config.method == "pcr":
            U, V = pcr_dual_solve(K_X, gamma, config.rank)
        else:
            K_Y = gram_matrix(kernel, Y)
            if config.method == "rrr":
                U, V, s2 = rrr_dual_solve(K_X, K_Y, gamma, config.rank, config.pseudo_inverse)
            else:
                U, V, s2 = randomized_rrr_solve(
                    K_X, K_Y, gamma, config.rank, config.oversample, config.power_iters, config.seed
                )
    return FittedOperator(kernel, config, X, Y, U, V, s2, centers, pairs.lag)
