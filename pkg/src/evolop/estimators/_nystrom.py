import logging
import warnings

import numpy as np
import scipy.linalg as sl

from evolop._rng import make_rng
from evolop.estimators._dual import PSD_RTOL, column_signs
from evolop.exceptions import ConfigError, NumericalError, SingularSystemError
from evolop.kernels import gram_matrix

logger = logging.getLogger("evolop")


def select_centers(n, m, seed):
    """Uniform sampling of ``m`` of ``n`` indices without replacement, sorted."""
    if not 1 <= m <= n:
        raise ConfigError(f"number of inducing points must be in [1, {n}], got {m}")
    return np.sort(make_rng(seed).choice(n, size=m, replace=False))


def _nystrom_features(kernel, data, centers, side):
    # Explicit features z(x) = w^-1/2 Q^T k(centers, x) from the inducing Gram.
    K_mm = gram_matrix(kernel, centers)
    w, Q = sl.eigh(K_mm)
    tol = PSD_RTOL * max(float(np.trace(K_mm)), np.finfo(float).tiny)
    keep = w > tol
    if not keep.all():
        n_null = int((~keep).sum())
        if np.unique(centers, axis=0).shape[0] < centers.shape[0]:
            warnings.warn(
                f"duplicate inducing {side} points make the inducing Gram singular "
                f"({n_null} null directions); using its pseudo-inverse",
                stacklevel=3,
            )
        else:
            # smooth kernels are routinely rank deficient at float precision
            logger.info("inducing %s Gram has %d null directions; using its pseudo-inverse", side, n_null)
    basis = Q[:, keep] / np.sqrt(w[keep])  # m x k
    Z = gram_matrix(kernel, data, centers) @ basis  # n x k
    return Z, basis


def nystrom_solve(method, kernel, X, Y, tikhonov, rank, centers_idx, pseudo_inverse=False):
    """Nystrom-restricted PCR / RRR.

    Both sides are projected on the span of their inducing points, after which
    the problem is a ridge-type regression between ``k``-dimensional explicit
    features ``Z_X`` (inputs) and ``Z_Y`` (outputs). Cost is O(n m^2 + m^3)
    time and O(n m) memory.

    Returns ``U, V, s2`` with ``U, V`` of shape (m, r), acting on kernel
    evaluations against ``X[centers_idx]`` and observable values at
    ``Y[centers_idx]``. ``s2`` is None for PCR.
    """
    n = X.shape[0]
    Zx, Bx = _nystrom_features(kernel, X, X[centers_idx], "input")
    Zy, By = _nystrom_features(kernel, Y, Y[centers_idx], "output")
    kx = Zx.shape[1]
    if not 1 <= rank <= kx:
        if rank > kx and method == "rrr":
            warnings.warn(f"rank {rank} exceeds the Nystrom feature rank {kx}; truncating", stacklevel=2)
            rank = kx
        else:
            raise ConfigError(f"rank exceeds data rank: {rank} > {kx} Nystrom features")
    C = Zx.T @ Zx / n
    C = 0.5 * (C + C.T)
    C_xy = Zx.T @ Zy / n

    if method == "pcr":
        mu, W = sl.eigh(C, subset_by_index=[kx - rank, kx - 1])
        mu, W = mu[::-1], W[:, ::-1]
        W = W * column_signs(Bx @ W)
        if mu[-1] <= PSD_RTOL * np.trace(C):
            raise ConfigError(f"rank exceeds data rank: eigenvalue {rank} of the covariance is {mu[-1]:.3e}")
        U = Bx @ W
        V = By @ (C_xy.T @ W / (mu + tikhonov))
        return U, V, None

    if method != "rrr":
        raise ConfigError(f"unknown Nystrom method {method!r}")
    gamma = tikhonov
    if gamma == 0 and pseudo_inverse:
        gamma = PSD_RTOL * np.trace(C)
    reg = C + gamma * np.eye(kx)
    try:
        L = sl.cholesky(reg, lower=True)
    except sl.LinAlgError as exc:
        if tikhonov == 0:
            raise SingularSystemError("singular system; increase tikhonov") from exc
        raise NumericalError(f"Cholesky of the regularized Nystrom covariance failed: {exc}") from exc
    Lc = sl.solve_triangular(L, C_xy, lower=True)  # L^-1 C_xy
    T = Lc @ Lc.T
    T = 0.5 * (T + T.T)
    s2, G = sl.eigh(T, subset_by_index=[kx - rank, kx - 1])
    s2, G = np.maximum(s2[::-1], 0.0), G[:, ::-1]
    H = sl.solve_triangular(L, G, lower=True, trans="T")  # h^T (C + gamma) h = 1
    H = H * column_signs(Bx @ H)
    U = Bx @ H
    V = By @ (C_xy.T @ H)
    return U, V, s2
