"""Eigendecomposition, modes and forecasting for fitted operators.

Right eigenfunctions live on the input side, ``psi_j(x) = k(x, X) @ R[:, j]``,
and are scaled to unit empirical norm on the training inputs, with the
largest-modulus training value made real and positive. Left eigenfunctions
live on the output side, ``xi_j(y) = k(y, Y) @ L[:, j]``, and are scaled so
that the kernel pairing of their coefficients with the right eigenfunctions
sampled on the training outputs is biorthonormal::

    sum_i L[i, j] * psi_k(y_i) = delta_jk

With that scaling the mode of an observable is ``m_j = L[:, j] @ f_Y`` and the
k-step forecast is ``sum_j lambda_j**k psi_j(x) m_j``.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl

from evolop.estimators import FittedOperator
from evolop.exceptions import ConfigError, NumericalError
from evolop.kernels import as_data_matrix, gram_matrix

logger = logging.getLogger("evolop")

# Relative size below which a direction of span{k(., X) U} is the zero function.
NULL_RTOL = 1e-12
# Eigenvector matrices with a larger condition number are reported as defective.
# Roundoff turns an exact Jordan block into eigenvectors with condition ~ eps**-0.5 ~ 7e7.
DEFECTIVE_COND = 1e7
# Eigenvalues this small (relative) have no normalizable left eigenfunction.
ZERO_EIG_RTOL = 1e-14
# Eigenfunctions whose training values disagree by more than this (relative) between two
# evaluation orders are lost in cancellation; they are dropped from the decomposition.
RESOLVE_RTOL = 1e-9


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    right_coeffs: np.ndarray = field(repr=False)
    left_coeffs: np.ndarray | None = field(repr=False)
    source: FittedOperator = field(repr=False)
    diagonalizable: bool = True
    condition: float = 1.0
    unresolved: int = 0

    @property
    def rank(self):
        return self.eigenvalues.size

    def continuous_time_eigenvalues(self, dt=1.0):
        """``log(lambda) / (lag * dt)``; ``nan`` for zero eigenvalues."""
        lam = self.eigenvalues.astype(complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(lam) / (self.source.lag * dt)
        out[lam == 0] = np.nan
        return out

    def to_dict(self, dt=1.0):
        ct = self.continuous_time_eigenvalues(dt)
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "log_eigenvalues_per_time": [
                None if not np.isfinite(z) else [float(z.real), float(z.imag)] for z in ct
            ],
            "lag": self.source.lag,
            "diagonalizable": self.diagonalizable,
            "eigenvector_condition": float(self.condition),
            "unresolved_dropped": self.unresolved,
        }

    def to_json(self, path=None, dt=1.0):
        text = json.dumps(self.to_dict(dt), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


@dataclass(frozen=True)
class ModeSet:
    modes: np.ndarray
    eigenvalues: np.ndarray
    observable: np.ndarray = field(repr=False)


def sort_eigenvalues(lam):
    """Indices sorting by modulus, then real part, then imaginary part, all descending."""
    lam = np.asarray(lam, dtype=complex)
    scale = max(np.abs(lam).max(initial=0.0), np.finfo(float).tiny)
    mod = np.round(np.abs(lam) / scale, 10)
    re = np.round(lam.real / scale, 10)
    im = np.round(lam.imag / scale, 10)
    return np.lexsort((-im, -re, -mod))


def _range_basis(K_cc):
    # Orthonormal basis of the numerical range of K_cc (pivoted Cholesky, LAPACK default tolerance).
    c, piv, r, info = sl.lapack.dpstrf(K_cc, lower=1)
    if info < 0 or r == 0:
        raise NumericalError("kernel matrix on the centers is numerically zero")
    B = np.zeros((K_cc.shape[0], r))
    B[piv - 1] = np.tril(c[:, :r])
    Q, _ = np.linalg.qr(B)
    return Q, B


def _compress(model, K_cc):
    # Re-express span{k(., X_c) U} in a K-orthonormal basis, dropping null directions.
    # Coefficients are first projected onto range(K_cc): their null-space part is the
    # zero function, and with small tikhonov it is large enough to swamp U^T K U.
    Q, B = _range_basis(K_cc)
    U = Q @ (Q.T @ model.U)
    W, s, Pt = np.linalg.svd(B.T @ U, full_matrices=False)
    keep = s > np.sqrt(NULL_RTOL) * max(s[0], np.finfo(float).tiny)
    if not keep.any():
        raise NumericalError("fitted operator is identically zero")
    P, s = Pt[keep].T, s[keep]
    return U @ (P / s), model.V @ (P * s)


def eig_decomposition(model: FittedOperator) -> SpectralDecomposition:
    Xc, Yc = model.X_centers, model.Y_centers
    K_cc = gram_matrix(model.kernel, Xc)
    U, V = _compress(model, K_cc)
    M = V.T @ gram_matrix(model.kernel, Yc, Xc) @ U
    lam, A = sl.eig(M)
    order = sort_eigenvalues(lam)
    lam, A = lam[order], A[:, order]
    R = U @ A
    K_train = K_cc if model.centers is None else gram_matrix(model.kernel, model.X_train, Xc)
    psi = K_train @ R
    norms = np.sqrt(np.mean(np.abs(psi) ** 2, axis=0))
    if np.any(norms == 0):
        raise NumericalError("eigenfunction vanishes on the training inputs")
    psi = psi / norms
    top = psi[np.argmax(np.abs(psi), axis=0), np.arange(psi.shape[1])]
    phase = np.conj(top) / np.abs(top)
    A = A * (phase / norms)
    KU = K_train @ U
    R = U @ A
    psi = K_train @ R
    err = np.abs(psi - KU @ A).max(axis=0) / np.sqrt(np.mean(np.abs(psi) ** 2, axis=0))
    resolved = err <= RESOLVE_RTOL
    if not resolved.any():
        raise NumericalError("no eigenfunction can be evaluated above roundoff")

    unit = A / np.linalg.norm(A, axis=0)
    cond = float(np.linalg.cond(unit))
    diagonalizable = bool(np.isfinite(cond) and cond < DEFECTIVE_COND)
    left = None
    if diagonalizable:
        A_inv = np.linalg.inv(A)  # rows b_j^H with b_j^H M = lambda_j b_j^H
        inv_lam = np.zeros_like(lam)
        nonzero = np.abs(lam) > ZERO_EIG_RTOL * max(np.abs(lam).max(), np.finfo(float).tiny)
        inv_lam[nonzero] = 1.0 / lam[nonzero]
        left = ((V @ A_inv.T) * inv_lam)[:, resolved]
    else:
        logger.warning("restriction matrix is non-diagonalizable within tol (cond %.3e)", cond)
    dropped = int((~resolved).sum())
    if dropped:
        logger.info("dropped %d eigenpairs lost in roundoff (|lambda| <= %.3e)", dropped, np.abs(lam[~resolved]).max())
    return SpectralDecomposition(lam[resolved], R[:, resolved], left, model, diagonalizable, cond, dropped)


def eval_eigenfunctions(decomp: SpectralDecomposition, X_new, side="right"):
    model = decomp.source
    X_new = as_data_matrix(X_new, "X_new")
    if X_new.shape[1] != model.dim:
        raise ConfigError(f"dimension mismatch: got {X_new.shape[1]} columns, model has {model.dim}")
    if side == "right":
        return gram_matrix(model.kernel, X_new, model.X_centers) @ decomp.right_coeffs
    if side == "left":
        if decomp.left_coeffs is None:
            raise NumericalError("left eigenfunctions undefined: decomposition is non-diagonalizable")
        return gram_matrix(model.kernel, X_new, model.Y_centers) @ decomp.left_coeffs
    raise ConfigError(f"side must be 'right' or 'left', got {side!r}")


def compute_modes(decomp: SpectralDecomposition, f_Y) -> ModeSet:
    """Coordinates ``m_j`` of an observable along the right eigenfunctions.

    ``f_Y`` holds the observable on the training outputs, shape (n, q).
    """
    if not decomp.diagonalizable:
        raise NumericalError("modes undefined: decomposition is non-diagonalizable within tol")
    f_c = decomp.source.restrict(f_Y)
    return ModeSet(decomp.left_coeffs.T @ f_c, decomp.eigenvalues, f_c)


def _spectral_forecast(decomp, X0, modes, steps):
    psi = eval_eigenfunctions(decomp, X0, "right")  # (N, r)
    powers = decomp.eigenvalues[None, :] ** np.arange(1, steps + 1)[:, None]  # (steps, r)
    out = np.einsum("nr,kr,rq->knq", psi, powers, modes.modes)
    return out


def predict(model: FittedOperator, x0, f_Y=None, steps=1, method="spectral", decomp=None,
            return_residual=False):
    """Forecast an observable ``steps`` steps ahead of ``x0``.

    Parameters
    ----------
    model : FittedOperator
    x0 : array of shape (d,)
        Initial state.
    f_Y : array of shape (n, q), optional
        Observable on the training outputs. Defaults to the state itself.
    steps : int
    method : {"spectral", "rollout"}
        ``spectral`` evaluates ``sum_j lambda_j**k psi_j(x0) m_j``;
        ``rollout`` applies the one-step map to the predicted state and needs
        ``f_Y`` to be the (d-dimensional) state observable.
    decomp : SpectralDecomposition, optional
        Reused if given.

    Returns
    -------
    ndarray of shape (steps, q), plus the relative imaginary residual of the
    spectral sum if ``return_residual``.
    """
    if int(steps) != steps or steps < 1:
        raise ConfigError(f"steps must be a positive integer, got {steps}")
    steps = int(steps)
    f_Y = model.Y_train if f_Y is None else np.asarray(f_Y, dtype=float)
    if f_Y.ndim == 1:
        f_Y = f_Y[:, None]
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    if x0.shape[1] != model.dim:
        raise ConfigError(f"x0 has dimension {x0.shape[1]}, model has {model.dim}")

    if method == "rollout":
        if f_Y.shape[1] != model.dim:
            raise ConfigError("rollout needs the state observable (q == d)")
        out = np.empty((steps, model.dim))
        x = x0
        for k in range(steps):
            x = model.one_step(x, f_Y)
            out[k] = x[0]
        return (out, 0.0) if return_residual else out

    if method != "spectral":
        raise ConfigError(f"unknown prediction method {method!r}")
    decomp = eig_decomposition(model) if decomp is None else decomp
    modes = compute_modes(decomp, f_Y)
    pred = _spectral_forecast(decomp, x0, modes, steps)[:, 0, :]
    norm = max(np.abs(pred.real).max(), np.finfo(float).tiny)
    residual = float(np.abs(pred.imag).max() / norm)
    if residual > 1e-6:
        warnings.warn(f"spectral forecast has imaginary residual {residual:.2e}", stacklevel=2)
    return (pred.real, residual) if return_residual else pred.real


def forecast_batch(model, X0, f_Y=None, steps=1, method="spectral", decomp=None):
    """Vectorized :func:`predict` over the rows of ``X0``; returns (steps, N, q)."""
    X0 = as_data_matrix(X0, "X0")
    f_Y = model.Y_train if f_Y is None else np.asarray(f_Y, dtype=float)
    if f_Y.ndim == 1:
        f_Y = f_Y[:, None]
    if method == "rollout":
        if f_Y.shape[1] != model.dim:
            raise ConfigError("rollout needs the state observable (q == d)")
        out = np.empty((steps,) + X0.shape)
        x = X0
        for k in range(steps):
            x = model.one_step(x, f_Y)
            out[k] = x
        return out
    decomp = eig_decomposition(model) if decomp is None else decomp
    return _spectral_forecast(decomp, X0, compute_modes(decomp, f_Y), steps).real


def eigenfunctions_csv(decomp, grid, path, side="right"):
    """Write eigenfunction values on ``grid`` as CSV (real and imaginary columns)."""
    grid = as_data_matrix(grid, "grid")
    vals = eval_eigenfunctions(decomp, grid, side)
    header = [f"x{i}" for i in range(grid.shape[1])]
    for j in range(vals.shape[1]):
        header += [f"re_psi{j}", f"im_psi{j}"]
    table = np.empty((grid.shape[0], grid.shape[1] + 2 * vals.shape[1]))
    table[:, : grid.shape[1]] = grid
    table[:, grid.shape[1] :: 2] = vals.real
    table[:, grid.shape[1] + 1 :: 2] = vals.imag
    np.savetxt(path, table, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
