"""Explicit-feature reference estimators.

These follow the closed forms literally and are meant for testing the Gram
space solvers, not for production use: with ``A = phi(X)``, ``B = phi(Y)``,
``C_X = A^T A / n`` and ``C_XY = A^T B / n``

    ridge  G = (C_X + g I)^-1 C_XY
    pcr    G = W_r (W_r^T C_X W_r + g I)^-1 W_r^T C_XY
    rrr    G = (C_X + g I)^-1/2 [[ (C_X + g I)^-1/2 C_XY ]]_r

where ``W_r`` holds the top-r eigenvectors of ``C_X`` and ``[[M]]_r`` is the
rank-r truncated SVD.
"""

from dataclasses import dataclass, field

import numpy as np

from evolop._rng import make_rng
from evolop.exceptions import ConfigError, SingularSystemError


class IdentityFeatures:
    def __call__(self, X):
        return np.asarray(X, dtype=float)

    def to_dict(self):
        return {"map": "identity"}


class RandomFourierFeatures:
    """``phi(x) = sqrt(2/D) cos(W x + b)`` with ``W ~ N(0, 1/l^2)``, ``b ~ U[0, 2 pi)``."""

    def __init__(self, dim, n_features=64, lengthscale=1.0, seed=0):
        rng = make_rng(seed)
        self.dim = dim
        self.n_features = n_features
        self.lengthscale = lengthscale
        self.seed = seed
        self.W = rng.standard_normal((dim, n_features)) / lengthscale
        self.b = rng.uniform(0.0, 2 * np.pi, size=n_features)

    def __call__(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        return np.sqrt(2.0 / self.n_features) * np.cos(X @ self.W + self.b)

    def to_dict(self):
        return {
            "map": "random_fourier",
            "dim": self.dim,
            "n_features": self.n_features,
            "lengthscale": self.lengthscale,
            "seed": self.seed,
        }


def _sym_power(S, power):
    w, Q = np.linalg.eigh(0.5 * (S + S.T))
    return (Q * w**power) @ Q.T


@dataclass(frozen=True)
class PrimalOperator:
    feature_map: object
    G: np.ndarray
    method: str
    tikhonov: float
    rank: int | None = None
    X_train: np.ndarray = field(default=None, repr=False)

    def predict(self, X_new, weights):
        """One-step prediction of the observable ``f = phi(.)^T weights``."""
        return self.feature_map(X_new) @ self.G @ weights

    def eig(self, X_eval=None, rtol=1e-10):
        """Nonzero eigenvalues of ``G`` and the matching eigenfunctions.

        Eigenfunctions ``psi_j(x) = phi(x)^T r_j`` are scaled to unit empirical
        norm on the training inputs and returned evaluated on ``X_eval``
        (defaults to the training inputs).
        """
        lam, R = np.linalg.eig(self.G)
        keep = np.abs(lam) > rtol * np.abs(lam).max()
        lam, R = lam[keep], R[:, keep]
        train = self.feature_map(self.X_train) @ R
        R = R / np.sqrt(np.mean(np.abs(train) ** 2, axis=0))
        X_eval = self.X_train if X_eval is None else X_eval
        return lam, self.feature_map(X_eval) @ R


def fit_primal_oracle(feature_map, config, pairs):
    A = feature_map(pairs.X)
    B = feature_map(pairs.Y)
    n, d_f = A.shape
    gamma = config.tikhonov
    C_X = A.T @ A / n
    C_XY = A.T @ B / n
    reg = C_X + gamma * np.eye(d_f)
    if np.linalg.cond(reg) > 1e12:
        raise SingularSystemError("singular system; increase tikhonov")

    if config.method == "ridge":
        G = np.linalg.solve(reg, C_XY)
    elif config.method == "pcr":
        w, Q = np.linalg.eigh(C_X)
        W_r = Q[:, ::-1][:, : config.rank]
        G = W_r @ np.linalg.solve(W_r.T @ C_X @ W_r + gamma * np.eye(config.rank), W_r.T @ C_XY)
    elif config.method == "rrr":
        W_isqrt = _sym_power(reg, -0.5)
        M = W_isqrt @ C_XY
        Us, s, Vt = np.linalg.svd(M)
        r = config.rank
        G = W_isqrt @ (Us[:, :r] * s[:r]) @ Vt[:r]
    else:
        raise ConfigError(f"no primal oracle for method {config.method!r}")
    return PrimalOperator(feature_map, G, config.method, gamma, config.rank, X_train=pairs.X)
