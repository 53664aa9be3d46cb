import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import linear_pairs, match_spectra, nonzero
from evolop.benchmarks import langevin_samples
from evolop.datasets import langevin_truth
from evolop.estimators import EstimatorConfig, IdentityFeatures, SnapshotPair, fit, fit_primal_oracle
from evolop.exceptions import ConfigError, NumericalError
from evolop.kernels import KernelSpec, gram_matrix
from evolop.spectral import (
    compute_modes,
    eig_decomposition,
    eigenfunctions_csv,
    eval_eigenfunctions,
    forecast_batch,
    predict,
    sort_eigenvalues,
)

LINEAR = KernelSpec.linear()


def rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def noiseless_pairs(rng, A, n=60):
    X = rng.standard_normal((n, A.shape[0]))
    return SnapshotPair(X, X @ A.T)


def nonlinear_pairs(rng, n=80):
    X = rng.uniform(-1, 1, (n, 1))
    Y = 0.8 * np.sin(2.5 * X) + 0.05 * rng.standard_normal((n, 1))
    return SnapshotPair(X, Y)


# -- eigenvalues --------------------------------------------------------------


def test_identity_dynamics_unit_eigenvalue(rng):
    X = rng.standard_normal((40, 3))
    model = fit(EstimatorConfig("ridge", tikhonov=1e-12), LINEAR, SnapshotPair(X, X))
    decomp = eig_decomposition(model)
    assert np.abs(decomp.eigenvalues - 1.0).max() <= 1e-6
    psi = eval_eigenfunctions(decomp, X)
    # an eigenfunction with eigenvalue 1 is invariant along the (trivial) dynamics on the data
    np.testing.assert_allclose(eval_eigenfunctions(decomp, model.Y_train), psi, atol=1e-8)


def test_rotation_conjugate_pair(rng):
    theta = 0.1
    model = fit(EstimatorConfig("rrr", rank=2, tikhonov=1e-12), LINEAR, noiseless_pairs(rng, rotation(theta)))
    lam = eig_decomposition(model).eigenvalues
    assert abs(lam[0] - np.exp(1j * theta)) <= 1e-6
    assert abs(lam[1] - np.exp(-1j * theta)) <= 1e-6
    assert lam[0] == np.conj(lam[1])


@pytest.mark.parametrize("method", ["ridge", "pcr", "rrr"])
def test_eigenvalues_match_primal_oracle(method):
    rng = np.random.default_rng(2024)
    for _ in range(20):
        d = int(rng.integers(2, 5))
        pairs, _ = linear_pairs(rng, int(rng.integers(20, 60)), d)
        rank = None if method == "ridge" else int(rng.integers(1, d + 1))
        config = EstimatorConfig(method, rank=rank, tikhonov=1e-3)
        dual = nonzero(eig_decomposition(fit(config, LINEAR, pairs)).eigenvalues)
        primal, _ = fit_primal_oracle(IdentityFeatures(), config, pairs).eig()
        assert dual.size == primal.size
        rows, cols = match_spectra(dual, primal)
        assert np.abs(dual[rows] - primal[cols]).max() <= 1e-8


def test_eigenfunctions_match_primal_oracle(rng):
    pairs, _ = linear_pairs(rng, 50, 3)
    config = EstimatorConfig("rrr", rank=3, tikhonov=1e-3)
    decomp = eig_decomposition(fit(config, LINEAR, pairs))
    lam_p, psi_p = fit_primal_oracle(IdentityFeatures(), config, pairs).eig()
    psi_d = eval_eigenfunctions(decomp, pairs.X)
    rows, cols = match_spectra(decomp.eigenvalues, lam_p)
    for i, j in zip(rows, cols):
        a, b = psi_d[:, i], psi_p[:, j]
        phase = np.vdot(a, b) / abs(np.vdot(a, b))
        assert np.abs(a * phase - b).max() <= 1e-8


def test_sorted_by_modulus_then_real_then_imag(rng):
    pairs = nonlinear_pairs(rng)
    lam = eig_decomposition(fit(EstimatorConfig("rrr", rank=6, tikhonov=1e-4), KernelSpec.gaussian(0.3), pairs)).eigenvalues
    assert np.all(np.diff(np.abs(lam)) <= 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=1, max_size=8))
def test_sort_key_property(parts):
    lam = np.array([complex(a, b) / 4 for a, b in parts])
    s = lam[sort_eigenvalues(lam)]
    for a, b in zip(s[:-1], s[1:]):
        key_a = (abs(a), a.real, a.imag)
        key_b = (abs(b), b.real, b.imag)
        assert np.round(key_a, 12).tolist() >= np.round(key_b, 12).tolist()


def test_continuous_time_eigenvalues(rng):
    pairs = noiseless_pairs(rng, np.diag([0.5, 0.25]))
    model = fit(EstimatorConfig("ridge", tikhonov=1e-12), LINEAR, pairs)
    decomp = eig_decomposition(model)
    np.testing.assert_allclose(decomp.continuous_time_eigenvalues(dt=0.1).real, np.log([0.5, 0.25]) / 0.1, atol=1e-5)
    data = json.loads(decomp.to_json())
    assert data["eigenvalues"][0] == pytest.approx([0.5, 0.0], abs=1e-6)
    assert data["diagonalizable"] is True


# -- normalization and conjugate structure --------------------------------------


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["pcr", "rrr", "ridge"]), st.floats(0.2, 2.0))
def test_unit_empirical_norm_property(seed, method, lengthscale):
    rng = np.random.default_rng(seed)
    pairs = nonlinear_pairs(rng, 40)
    rank = None if method == "ridge" else 4
    decomp = eig_decomposition(fit(EstimatorConfig(method, rank=rank, tikhonov=1e-3), KernelSpec.gaussian(lengthscale), pairs))
    psi = eval_eigenfunctions(decomp, pairs.X)
    np.testing.assert_allclose(np.mean(np.abs(psi) ** 2, axis=0), 1.0, atol=1e-8)
    top = psi[np.argmax(np.abs(psi), axis=0), np.arange(psi.shape[1])]
    assert np.all(np.abs(top.imag) <= 1e-10) and np.all(top.real > 0)


def test_conjugate_closure(rng):
    A = 0.95 * rotation(0.4)
    X = rng.standard_normal((200, 2))
    Y = X @ A.T + 0.05 * rng.standard_normal((200, 2))
    decomp = eig_decomposition(fit(EstimatorConfig("rrr", rank=6, tikhonov=1e-4), KernelSpec.gaussian(1.0), SnapshotPair(X, Y)))
    lam, R = decomp.eigenvalues, decomp.right_coeffs
    assert np.any(np.abs(lam.imag) > 1e-6)
    for j, z in enumerate(lam):
        if abs(z.imag) <= 1e-10:
            continue
        k = int(np.argmin(np.abs(lam - np.conj(z))))
        assert abs(lam[k] - np.conj(z)) <= 1e-10
        np.testing.assert_allclose(R[:, k], np.conj(R[:, j]), atol=1e-8 * np.abs(R).max())


def test_forecasts_are_real(rng):
    A = 0.95 * rotation(0.4)
    X = rng.standard_normal((200, 2))
    Y = X @ A.T + 0.05 * rng.standard_normal((200, 2))
    model = fit(EstimatorConfig("rrr", rank=6, tikhonov=1e-4), KernelSpec.gaussian(1.0), SnapshotPair(X, Y))
    pred, residual = predict(model, X[0], steps=4, return_residual=True)
    assert residual <= 1e-6


# -- eigenfunction equation and left functions ------------------------------------


def test_eigenfunction_equation_on_samples(rng):
    A = np.array([[0.8, 0.3], [-0.2, 0.6]])
    pairs = noiseless_pairs(rng, A, 80)
    decomp = eig_decomposition(fit(EstimatorConfig("rrr", rank=2, tikhonov=1e-12), LINEAR, pairs))
    psi_x = eval_eigenfunctions(decomp, pairs.X)
    psi_y = eval_eigenfunctions(decomp, pairs.Y)
    n = pairs.n_samples
    resid = np.linalg.norm(psi_y - psi_x * decomp.eigenvalues, axis=0) / np.sqrt(n)
    assert resid.max() <= 1e-6


@pytest.mark.parametrize("method", ["ridge", "rrr", "pcr"])
def test_biorthonormal_pairing(rng, method):
    pairs = nonlinear_pairs(rng, 60)
    rank = None if method == "ridge" else 5
    decomp = eig_decomposition(fit(EstimatorConfig(method, rank=rank, tikhonov=1e-3), KernelSpec.gaussian(0.5), pairs))
    psi_y = eval_eigenfunctions(decomp, pairs.Y)
    P = decomp.left_coeffs.T @ psi_y
    assert np.abs(P - np.eye(P.shape[0])).max() <= 1e-6


def test_left_eigenfunction_equation(rng):
    # xi_j = k(., Y) L[:, j] satisfies xi_j^T E = lambda_j xi_j^T in the pairing sense:
    # sum_i L[i, j] (E f)(y_i)-weights reproduce lambda_j times the mode of f.
    pairs = nonlinear_pairs(rng, 60)
    model = fit(EstimatorConfig("rrr", rank=4, tikhonov=1e-3), KernelSpec.gaussian(0.5), pairs)
    decomp = eig_decomposition(model)
    f_Y = np.cos(3 * pairs.Y)
    m = compute_modes(decomp, f_Y).modes[:, 0]
    Ef_Y = model.one_step(pairs.Y, f_Y)[:, 0]
    lhs = decomp.left_coeffs.T @ Ef_Y
    np.testing.assert_allclose(lhs, decomp.eigenvalues * m, atol=1e-8 * np.abs(m).max())


def test_eval_dimension_mismatch(rng):
    pairs = nonlinear_pairs(rng, 30)
    decomp = eig_decomposition(fit(EstimatorConfig("pcr", rank=3, tikhonov=1e-3), KernelSpec.gaussian(0.5), pairs))
    with pytest.raises(ConfigError, match="dimension"):
        eval_eigenfunctions(decomp, np.zeros((4, 2)))
    with pytest.raises(ConfigError):
        eval_eigenfunctions(decomp, pairs.X, side="middle")
    assert eval_eigenfunctions(decomp, pairs.X[:5], side="left").shape == (5, 3)


def test_langevin_eigenfunction_sign_per_well():
    truth = langevin_truth(1.0, 0.1, (-1.0, 1.0, 1000))
    pairs = langevin_samples(40_000, seed=0)
    grid = truth.grid
    ref = truth.eigenfunctions[:, 1].real
    wells = [(-1.0, -0.5), (-0.5, 0.0), (0.0, 0.5), (0.5, 1.0)]  # basins between the barrier tops
    for method in ("nystrom_rrr", "nystrom_pcr"):
        config = EstimatorConfig(method, rank=5, tikhonov=1e-6, inducing=1000, seed=0)
        decomp = eig_decomposition(fit(config, KernelSpec.gaussian(0.1), pairs))
        psi = eval_eigenfunctions(decomp, grid[:, None])[:, 1].real
        psi *= np.sign(np.sum(truth.invariant_density * psi * ref))
        agree = np.sign(psi) == np.sign(ref)
        for lo, hi in wells:
            inside = (grid >= lo) & (grid <= hi)
            assert agree[inside].mean() >= 0.95, (method, lo, hi)


# -- modes ----------------------------------------------------------------------


@pytest.fixture
def rrr_decomp(rng):
    pairs = nonlinear_pairs(rng, 70)
    model = fit(EstimatorConfig("rrr", rank=5, tikhonov=1e-4), KernelSpec.gaussian(0.4), pairs)
    return pairs, model, eig_decomposition(model)


def test_zero_observable_zero_modes(rrr_decomp):
    pairs, _, decomp = rrr_decomp
    assert np.all(compute_modes(decomp, np.zeros((pairs.n_samples, 2))).modes == 0)


def test_eigenfunction_observable_single_mode(rrr_decomp):
    pairs, _, decomp = rrr_decomp
    j = 2
    f_Y = eval_eigenfunctions(decomp, pairs.Y)[:, j]
    m = compute_modes(decomp, f_Y.real).modes[:, 0] + 1j * compute_modes(decomp, f_Y.imag).modes[:, 0]
    assert abs(m[j] - 1.0) <= 1e-6
    others = np.delete(m, j)
    assert np.abs(others).max() <= 1e-6 * abs(m[j])


def test_modes_reconstruct_one_step_prediction(rng):
    A = np.array([[0.9, 0.1], [0.0, 0.5]])
    X = rng.standard_normal((100, 2))
    pairs = SnapshotPair(X, X @ A.T + 0.05 * rng.standard_normal((100, 2)))
    model = fit(EstimatorConfig("rrr", rank=2, tikhonov=1e-6), LINEAR, pairs)
    decomp = eig_decomposition(model)
    x0 = np.array([0.7, -1.2])
    direct = model.one_step(x0[None, :])[0]
    psi = eval_eigenfunctions(decomp, x0[None, :])[0]
    modes = compute_modes(decomp, pairs.Y).modes
    recon = (decomp.eigenvalues * psi) @ modes
    np.testing.assert_allclose(recon.real, direct, atol=1e-8)
    np.testing.assert_allclose(predict(model, x0, steps=1)[0], direct, atol=1e-8)


def test_full_rank_ridge_mode_identities(rng):
    X = np.linspace(-1, 1, 30)[:, None] + 0.005 * rng.standard_normal((30, 1))
    pairs = SnapshotPair(X, 0.8 * np.sin(2.5 * X) + 0.05 * rng.standard_normal((30, 1)))
    kernel = KernelSpec.gaussian(0.1)
    assert np.linalg.cond(gram_matrix(kernel, pairs.X)) < 1e8  # full rank in floating point
    model = fit(EstimatorConfig("ridge", tikhonov=1e-3), kernel, pairs)
    decomp = eig_decomposition(model)
    assert decomp.rank == pairs.n_samples
    f_Y = np.column_stack([np.sin(4 * pairs.Y[:, 0]), pairs.Y[:, 0] ** 2])
    modes = compute_modes(decomp, f_Y).modes
    psi_x = eval_eigenfunctions(decomp, pairs.X)
    one_step = (psi_x * decomp.eigenvalues) @ modes
    np.testing.assert_allclose(one_step.real, model.one_step(pairs.X, f_Y), atol=1e-6 * np.abs(f_Y).max())
    # without the eigenvalue factor the modes rebuild the observable itself on the training outputs
    psi_y = eval_eigenfunctions(decomp, pairs.Y)
    np.testing.assert_allclose((psi_y @ modes).real, f_Y, atol=1e-6 * np.abs(f_Y).max())


def test_observable_row_mismatch(rrr_decomp):
    _, _, decomp = rrr_decomp
    with pytest.raises(ConfigError):
        compute_modes(decomp, np.zeros((3, 1)))


def test_defective_restriction_is_flagged(rng):
    J = np.array([[0.9, 1.0], [0.0, 0.9]])
    model = fit(EstimatorConfig("pcr", rank=2, tikhonov=0.0), LINEAR, noiseless_pairs(rng, J, 50))
    decomp = eig_decomposition(model)
    assert not decomp.diagonalizable
    assert decomp.left_coeffs is None
    np.testing.assert_allclose(decomp.eigenvalues, [0.9, 0.9], atol=1e-6)
    with pytest.raises(NumericalError, match="modes undefined"):
        compute_modes(decomp, model.Y_train)
    with pytest.raises(NumericalError):
        predict(model, [1.0, 1.0], steps=2, method="spectral", decomp=decomp)
    # rollout never needs the eigenvectors
    np.testing.assert_allclose(predict(model, [1.0, 1.0], steps=2, method="rollout"), [J @ [1, 1], J @ J @ [1, 1]], atol=1e-8)


# -- prediction -------------------------------------------------------------------


def test_geometric_decay():
    x = 0.9 ** np.arange(51)
    pairs = SnapshotPair(x[:-1, None], 0.5 * x[:-1, None])
    model = fit(EstimatorConfig("ridge", tikhonov=1e-10), LINEAR, pairs)
    out = predict(model, [1.0], steps=3, method="spectral")
    np.testing.assert_allclose(out[:, 0], [0.5, 0.25, 0.125], atol=1e-6)


def test_matrix_power_forecast(rng):
    A = np.array([[0.8, 0.3], [-0.2, 0.6]])
    model = fit(EstimatorConfig("rrr", rank=2, tikhonov=1e-12), LINEAR, noiseless_pairs(rng, A))
    x0 = np.array([1.0, -0.5])
    out = predict(model, x0, steps=5, method="spectral")
    np.testing.assert_allclose(out[-1], np.linalg.matrix_power(A, 5) @ x0, atol=1e-6)
    ref = np.array([np.linalg.matrix_power(A, k) @ x0 for k in range(1, 6)])
    np.testing.assert_allclose(predict(model, x0, steps=5, method="rollout"), ref, atol=1e-6)
    np.testing.assert_allclose(out, ref, atol=1e-6)


def test_forecast_batch_matches_predict(rng):
    A = 0.95 * rotation(0.3)
    X = rng.standard_normal((150, 2))
    model = fit(EstimatorConfig("rrr", rank=5, tikhonov=1e-4), KernelSpec.gaussian(1.0), SnapshotPair(X, X @ A.T))
    X0 = rng.standard_normal((4, 2))
    for method in ("spectral", "rollout"):
        batch = forecast_batch(model, X0, steps=3, method=method)
        for i in range(4):
            np.testing.assert_allclose(batch[:, i], predict(model, X0[i], steps=3, method=method), atol=1e-10)


def test_predict_argument_errors(rng):
    pairs = nonlinear_pairs(rng, 30)
    model = fit(EstimatorConfig("pcr", rank=3, tikhonov=1e-3), KernelSpec.gaussian(0.5), pairs)
    with pytest.raises(ConfigError):
        predict(model, [0.1], steps=0)
    with pytest.raises(ConfigError):
        predict(model, [0.1], f_Y=np.zeros((30, 2)), steps=1, method="rollout")
    with pytest.raises(ConfigError):
        predict(model, [0.1, 0.2], steps=1)
    with pytest.raises(ConfigError):
        predict(model, [0.1], steps=1, method="magic")


def test_eigenfunctions_csv(rng, tmp_path):
    pairs = nonlinear_pairs(rng, 30)
    decomp = eig_decomposition(fit(EstimatorConfig("pcr", rank=3, tikhonov=1e-3), KernelSpec.gaussian(0.5), pairs))
    grid = np.linspace(-1, 1, 7)[:, None]
    eigenfunctions_csv(decomp, grid, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "x0,re_psi0,im_psi0,re_psi1,im_psi1,re_psi2,im_psi2"
    table = np.loadtxt(tmp_path / "e.csv", delimiter=",", skiprows=1)
    vals = eval_eigenfunctions(decomp, grid)
    np.testing.assert_array_equal(table[:, 1::2], vals.real)
    np.testing.assert_array_equal(table[:, 2::2], vals.imag)
