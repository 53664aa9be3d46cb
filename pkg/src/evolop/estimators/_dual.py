"""Gram-space solvers for the finite-rank evolution operator.

Every solver returns dual weights ``U, V`` such that an observable ``f`` with
values ``f_Y`` on the training outputs is propagated one step as

    f_hat(x) = k(x, X) @ U @ (V.T @ f_Y).
"""

import logging
import warnings

import numpy as np
import scipy.linalg as sl

from evolop._rng import make_rng
from evolop.exceptions import ConfigError, NumericalError, SingularSystemError

logger = logging.getLogger("evolop")

# Relative (to the trace) level below which PSD eigenvalues are treated as zero.
PSD_RTOL = 1e-12
# Relative cutoff for the metric block of the randomized Ritz pencil.
RITZ_RTOL = 1e-12


def column_signs(W):
    """+-1 per column, chosen so the first nonzero entry becomes positive."""
    signs = np.ones(W.shape[1])
    for j in range(W.shape[1]):
        nz = np.flatnonzero(W[:, j] != 0)
        if nz.size and W[nz[0], j] < 0:
            signs[j] = -1.0
    return signs


def fix_signs(W):
    return W * column_signs(W)


def psd_eigh(K, name="K_X"):
    """Eigendecomposition of a PSD matrix with roundoff-level eigenvalues clamped.

    Returns ``(w, Q, tol)`` with ``w`` ascending and nonnegative. Raises if an
    eigenvalue is negative beyond ``tol = PSD_RTOL * trace``.
    """
    w, Q = sl.eigh(K)
    tol = PSD_RTOL * max(float(np.trace(K)), np.finfo(float).tiny)
    if w[0] < -tol:
        raise NumericalError(f"{name} is not positive semidefinite (eigenvalue {w[0]:.3e})")
    w = np.where(np.abs(w) <= tol, 0.0, w)
    return w, Q, tol


def _check_square(K, name):
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ConfigError(f"{name} must be square, got shape {K.shape}")


def ridge_dual_solve(K_X, tikhonov, pseudo_inverse=False):
    """Full-rank kernel ridge: ``U = (K_X + n*gamma*I)^-1``, ``V = I``.

    Built from the clamped eigendecomposition of ``K_X``. Directions whose
    eigenvalue is clamped to zero span coefficients of the zero function and
    are left out of ``U``; keeping them would add a block of size
    ``1 / (n*gamma)`` that carries no information but swamps roundoff.
    """
    K_X = np.asarray(K_X, dtype=float)
    _check_square(K_X, "K_X")
    n = K_X.shape[0]
    w, Q, tol = psd_eigh(K_X)
    keep = w > tol
    if tikhonov == 0 and not keep.all() and not pseudo_inverse:
        raise SingularSystemError("singular system; increase tikhonov")
    if not keep.any():
        raise NumericalError("K_X is numerically zero")
    Qk = Q[:, keep]
    U = (Qk / (w[keep] + n * tikhonov)) @ Qk.T
    return 0.5 * (U + U.T), np.eye(n)


def pcr_dual_solve(K_X, tikhonov, rank):
    """Principal component regression (kernel DMD) in Gram space.

    Columns of ``U`` are the top-``rank`` eigenvectors of ``K_X`` scaled so that
    ``U.T @ K_X @ U = n * I``.
    """
    K_X = np.asarray(K_X, dtype=float)
    _check_square(K_X, "K_X")
    n = K_X.shape[0]
    if not 1 <= rank <= n:
        raise ConfigError(f"rank must be in [1, {n}], got {rank}")
    tol = PSD_RTOL * max(float(np.trace(K_X)), np.finfo(float).tiny)
    lam, Q = sl.eigh(K_X, subset_by_index=[n - rank, n - 1])
    lam, Q = lam[::-1], fix_signs(Q[:, ::-1])
    if lam[-1] <= tol:
        raise ConfigError(f"rank exceeds data rank: eigenvalue {rank} of K_X is {lam[-1]:.3e}")
    U = Q * np.sqrt(n / lam)
    V = Q * (np.sqrt(lam / n) / (lam + n * tikhonov))
    return U, V


def rrr_dual_solve(K_X, K_Y, tikhonov, rank, pseudo_inverse=False):
    """Kernel reduced-rank regression.

    Solves ``(1/n) K_Y K_X u = s2 (K_X + n*gamma*I) u`` for the top-``rank``
    pairs. The pencil is symmetrized through the spectral factor
    ``K_X = F F^T``, ``F = Q sqrt(w)``, which turns it into the standard
    symmetric problem ``D^-1/2 F^T K_Y F D^-1/2 / n`` with ``D = w + n*gamma``.
    Eigenvectors are normalized by ``u^T K_X (K_X + n*gamma) u / n = 1``, and
    ``V = K_X U / n``.

    Returns ``U, V, s2`` with ``s2`` nonincreasing.
    """
    K_X = np.asarray(K_X, dtype=float)
    K_Y = np.asarray(K_Y, dtype=float)
    _check_square(K_X, "K_X")
    _check_square(K_Y, "K_Y")
    if K_X.shape != K_Y.shape:
        raise ConfigError(f"K_X and K_Y shapes differ: {K_X.shape} vs {K_Y.shape}")
    n = K_X.shape[0]
    if not 1 <= rank <= n:
        raise ConfigError(f"rank must be in [1, {n}], got {rank}")
    if tikhonov < 0:
        raise ConfigError("tikhonov must be nonnegative")

    w, Q, tol = psd_eigh(K_X, "K_X")
    keep = w > tol
    if tikhonov == 0 and not keep.all() and not pseudo_inverse:
        raise SingularSystemError("singular system; increase tikhonov")
    w, Q = w[keep], Q[:, keep]
    k = w.size
    if k == 0:
        raise NumericalError("K_X is numerically zero")
    if rank > k:
        warnings.warn(f"rank {rank} exceeds the numerical rank {k} of K_X; truncating", stacklevel=2)
        rank = k
    scale = np.sqrt(w / (w + n * tikhonov))  # = sqrt(w) / sqrt(D)
    B = Q * scale
    T = B.T @ K_Y @ B / n
    T = 0.5 * (T + T.T)
    s2, Z = sl.eigh(T, subset_by_index=[k - rank, k - 1])
    s2, Z = s2[::-1], Z[:, ::-1]
    if s2[-1] < -PSD_RTOL * max(1.0, abs(s2[0])):
        raise NumericalError(f"K_Y is not positive semidefinite (generalized eigenvalue {s2[-1]:.3e})")
    s2 = np.maximum(s2, 0.0)

    inv_sqrt_d = 1.0 / np.sqrt(w + n * tikhonov)
    U = np.sqrt(n) * (Q * (inv_sqrt_d / np.sqrt(w))) @ Z
    U = fix_signs(U)
    V = K_X @ U / n
    return U, V, s2


def randomized_rrr_solve(K_X, K_Y, tikhonov, rank, oversample=10, power_iters=1, seed=0):
    """Randomized reduced-rank regression.

    Works in the variable ``s = (K_X + n*gamma*I) u``, where the problem of
    :func:`rrr_dual_solve` becomes the pencil ``(G K_Y G / n, G)`` with
    ``G = K_X (K_X + n*gamma*I)^-1``. ``G`` has spectrum in [0, 1) and is
    applied through a Cholesky solve, so the Gram matrix is never squared.
    A Gaussian sketch of ``r + p`` columns is pushed through
    ``K_Y G / n`` (``q`` extra power iterations with QR
    re-orthonormalization) and the pencil is solved by Rayleigh-Ritz on the
    captured subspace.
    """
    K_X = np.asarray(K_X, dtype=float)
    K_Y = np.asarray(K_Y, dtype=float)
    _check_square(K_X, "K_X")
    n = K_X.shape[0]
    if not 1 <= rank <= n:
        raise ConfigError(f"rank must be in [1, {n}], got {rank}")
    if oversample < 0 or power_iters < 0:
        raise ConfigError("oversample and power_iters must be nonnegative")
    width = rank + oversample
    if width > n:
        raise ConfigError(f"rank + oversample = {width} exceeds the number of samples {n}")

    try:
        chol = sl.cho_factor(K_X + n * tikhonov * np.eye(n))
    except sl.LinAlgError as exc:
        if tikhonov == 0:
            raise SingularSystemError("singular system; increase tikhonov") from exc
        raise NumericalError(f"Cholesky of K_X + n*gamma*I failed: {exc}") from exc

    def smooth(S):
        return K_X @ sl.cho_solve(chol, S)

    rng = make_rng(seed)
    sketch = rng.standard_normal((n, width))
    Yk = K_Y @ smooth(sketch) / n
    for _ in range(power_iters):
        Qk, _ = sl.qr(Yk, mode="economic")
        Yk = K_Y @ smooth(Qk) / n
    Qk, _ = sl.qr(Yk, mode="economic")

    GQ = smooth(Qk)
    A = GQ.T @ K_Y @ GQ / n
    B = Qk.T @ GQ
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    wb, Eb = sl.eigh(B)
    keep = wb > RITZ_RTOL * max(wb[-1], np.finfo(float).tiny)
    S = Eb[:, keep] / np.sqrt(wb[keep])
    k = S.shape[1]
    if rank > k:
        warnings.warn(f"sketch captured only {k} directions; truncating rank {rank}", stacklevel=2)
        rank = k
    Ar = S.T @ A @ S
    Ar = 0.5 * (Ar + Ar.T)
    s2, Yr = sl.eigh(Ar, subset_by_index=[k - rank, k - 1])
    s2, Yr = np.maximum(s2[::-1], 0.0), Yr[:, ::-1]
    U = fix_signs(np.sqrt(n) * sl.cho_solve(chol, Qk @ (S @ Yr)))
    V = K_X @ U / n
    return U, V, s2
