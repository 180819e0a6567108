import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.errors import IndexOutOfRange, LengthMismatch, NoPositiveSpectrum, NotSymmetric, UsageError
from app.kernels import KernelSpec, gram_matrix
from app.spectral import (
    SpectralModel,
    assemble_k_mu,
    cross_block,
    decompose,
    entry,
    training_block,
)


def _rel_err(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)


@pytest.fixture
def linear_model(rng):
    X = rng.standard_normal((6, 4))
    K = gram_matrix(KernelSpec.linear(), X)
    return K, decompose(K)


def test_scaled_identity():
    model = decompose(2 * np.eye(3))
    assert model.p == 3
    np.testing.assert_allclose(model.eigenvalues, [2, 2, 2])
    np.testing.assert_allclose(model.eigenvectors.T @ model.eigenvectors, np.eye(3), atol=1e-12)


def test_rank_one():
    model = decompose(np.ones((3, 3)))
    assert model.p == 1
    assert model.eigenvalues[0] == pytest.approx(3.0)
    np.testing.assert_allclose(model.eigenvectors[:, 0], np.ones(3) / np.sqrt(3), atol=1e-12)


def test_linear_kernel_rank_and_reconstruction(linear_model):
    K, model = linear_model
    assert model.p <= 4
    V, lam = model.eigenvectors, model.eigenvalues
    assert _rel_err((V * lam) @ V.T, K) <= 1e-8
    assert np.all(np.diff(lam) <= 0)


def test_baseline_mu_reproduces_gram(linear_model):
    K, model = linear_model
    assert _rel_err(assemble_k_mu(model, model.baseline_mu()), K) <= 1e-8


def test_zero_mu_gives_zero_matrix(linear_model):
    _, model = linear_model
    mu = np.zeros(model.p)
    np.testing.assert_array_equal(assemble_k_mu(model, mu), np.zeros((6, 6)))
    assert entry(model, mu, 2, 5) == 0.0


def test_single_base_kernel(linear_model):
    _, model = linear_model
    mu = np.zeros(model.p)
    mu[0] = 1.0
    K1 = assemble_k_mu(model, mu)
    assert np.trace(K1) == pytest.approx(1.0)
    assert np.linalg.matrix_rank(K1, tol=1e-10) == 1
    v = model.eigenvectors[:, 0]
    np.testing.assert_allclose(K1, np.outer(v, v), atol=1e-14)


def test_entry_matches_assembled_matrix(linear_model, rng):
    K, model = linear_model
    mu = rng.uniform(0.1, 2.0, model.p)
    Kmu = assemble_k_mu(model, mu)
    for i in range(model.N):
        for j in range(model.N):
            assert entry(model, mu, i, j) == pytest.approx(Kmu[i, j], abs=1e-12)
    baseline = model.baseline_mu()
    assert entry(model, baseline, 3, 3) == pytest.approx(K[3, 3])


def test_entry_index_out_of_range(linear_model):
    _, model = linear_model
    with pytest.raises(IndexOutOfRange):
        entry(model, model.baseline_mu(), 6, 0)
    with pytest.raises(IndexOutOfRange):
        entry(model, model.baseline_mu(), 0, -1)


def test_k_mu_is_psd(linear_model, rng):
    _, model = linear_model
    mu = rng.standard_normal(model.p)
    w = np.linalg.eigvalsh(assemble_k_mu(model, mu))
    assert w.min() >= -1e-10 * max(1.0, w.max())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=3, max_size=3),
       st.lists(st.booleans(), min_size=3, max_size=3))
def test_k_mu_depends_only_on_mu_squared(values, flips):
    K = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]])
    model = decompose(K)
    mu = np.array(values[: model.p])
    flipped = np.where(np.array(flips[: model.p]), -mu, mu)
    np.testing.assert_array_equal(assemble_k_mu(model, mu), assemble_k_mu(model, flipped))


@pytest.mark.parametrize("seed", range(20))
def test_decompose_recovers_mu_squared(seed):
    rng = np.random.default_rng(700 + seed)
    N, rank = 6 + seed % 5, 3 + seed % 4
    A = rng.standard_normal((N, rank))
    model = decompose(A @ A.T)
    mu = rng.uniform(0.5, 2.0, model.p)

    again = decompose(assemble_k_mu(model, mu))

    assert again.p == model.p == min(N, rank)
    np.testing.assert_allclose(again.eigenvalues, np.sort(mu ** 2)[::-1], rtol=1e-8)


def test_blocks(linear_model, rng):
    _, model = linear_model
    mu = rng.uniform(0.5, 1.5, model.p)
    Kmu = assemble_k_mu(model, mu)
    np.testing.assert_allclose(training_block(model, mu, 4), Kmu[:4, :4], atol=1e-12)
    np.testing.assert_allclose(cross_block(model, mu, 4), Kmu[:4], atol=1e-12)
    with pytest.raises(IndexOutOfRange):
        training_block(model, mu, 7)


def test_eigenvector_sign_convention(rng):
    X = rng.standard_normal((5, 5))
    model = decompose(X @ X.T)
    V = model.eigenvectors
    pivots = np.argmax(np.abs(V), axis=0)
    assert np.all(V[pivots, np.arange(model.p)] >= 0)


def test_truncation_drops_tiny_eigenvalues():
    K = np.diag([5.0, 1.0, 1e-13, 0.0, -1e-14])
    model = decompose(K, rel_tol=1e-10)
    np.testing.assert_allclose(model.eigenvalues, [5.0, 1.0])


def test_not_symmetric():
    with pytest.raises(NotSymmetric):
        decompose(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotSymmetric):
        decompose(np.ones((2, 3)))


def test_no_positive_spectrum():
    with pytest.raises(NoPositiveSpectrum):
        decompose(np.zeros((3, 3)))
    with pytest.raises(NoPositiveSpectrum):
        decompose(-np.eye(2))


def test_bad_rel_tol():
    with pytest.raises(UsageError):
        decompose(np.eye(2), rel_tol=0.0)


def test_mu_length_checked(linear_model):
    _, model = linear_model
    with pytest.raises(LengthMismatch):
        assemble_k_mu(model, np.ones(model.p + 1))
    with pytest.raises(UsageError):
        assemble_k_mu(model)


def test_save_and_load(linear_model, tmp_path):
    _, model = linear_model
    model = model.with_mu(model.baseline_mu() * 2)
    path = model.save(tmp_path / "spectral.npz")
    loaded = SpectralModel.load(path)
    np.testing.assert_array_equal(loaded.eigenvalues, model.eigenvalues)
    np.testing.assert_array_equal(loaded.eigenvectors, model.eigenvectors)
    np.testing.assert_array_equal(loaded.mu, model.mu)
