import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from evolop.estimators import EstimatorConfig, IdentityFeatures, SnapshotPair, fit, fit_primal_oracle
from evolop.kernels import KernelSpec
from evolop.spectral import eig_decomposition, eval_eigenfunctions


def linear_pairs(rng, n, d, noise=0.1):
    """Snapshot pairs ``y = A x + noise`` with a random contraction ``A``."""
    A = rng.standard_normal((d, d))
    A *= 0.9 / max(np.abs(np.linalg.eigvals(A)).max(), 1e-3)
    X = rng.standard_normal((n, d))
    Y = X @ A.T + noise * rng.standard_normal((n, d))
    return SnapshotPair(X, Y), A


def match_spectra(a, b):
    """Index pairs minimizing total distance between two eigenvalue lists."""
    D = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    return linear_sum_assignment(D)


def nonzero(lam, rtol=1e-10):
    lam = np.asarray(lam)
    return lam[np.abs(lam) > rtol * np.abs(lam).max()]


def phase_aligned_error(a, b):
    """Relative distance between vectors after removing a complex phase."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    inner = np.vdot(a, b)
    phase = inner / abs(inner) if inner != 0 else 1.0
    return np.linalg.norm(a * phase - b) / np.linalg.norm(b)


def predictions(model, X, f_Y=None):
    return model.one_step(X, model.Y_train if f_Y is None else f_Y)


def rel(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


def dual_primal_gap(pairs, method, rank, gamma):
    """Relative dual-vs-primal gaps: (predictions, nonzero eigenvalues, eigenfunctions)."""
    cfg = EstimatorConfig(method, rank=rank, tikhonov=gamma)
    dual = fit(cfg, KernelSpec.linear(), pairs)
    primal = fit_primal_oracle(IdentityFeatures(), cfg, pairs)
    f_Y = pairs.Y
    W = np.eye(pairs.X.shape[1])
    pred_gap = rel(predictions(dual, pairs.X, f_Y), primal.predict(pairs.X, W))
    decomp = eig_decomposition(dual)
    keep = np.abs(decomp.eigenvalues) > 1e-10 * np.abs(decomp.eigenvalues).max()
    lam_d = decomp.eigenvalues[keep]
    psi_d = eval_eigenfunctions(decomp, pairs.X)[:, keep]
    lam_p, psi_p = primal.eig()
    assert lam_d.size == lam_p.size
    i, j = match_spectra(lam_d, lam_p)
    eig_gap = np.abs(lam_d[i] - lam_p[j]).max() / np.abs(lam_p).max()
    fn_gap = max(phase_aligned_error(psi_d[:, a], psi_p[:, b]) for a, b in zip(i, j))
    return pred_gap, eig_gap, fn_gap


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
