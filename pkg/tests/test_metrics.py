import numpy as np
import pytest

from divkit.metrics import (NonFiniteInputError, attention_contraction, diversity,
                            diversity_oracle, effective_dimension, pca_top_k,
                            projector_gram_top_eig, spectral_norm)
from divkit.sinkhorn import sinkhorn, stochastic_error


def random_matrix(rng, n=None, d=None):
    n = n or int(rng.integers(2, 40))
    d = d or int(rng.integers(2, 40))
    return rng.standard_normal((n, d)) * rng.uniform(0.1, 10.0)


def test_diversity_matches_least_squares_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        H = random_matrix(rng)
        a, b = diversity(H), diversity_oracle(H)
        assert abs(a - b) <= 1e-10 * max(1.0, b)


def test_diversity_zero_on_identical_rows():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(7)
    H = np.tile(x, (12, 1))
    assert diversity(H) <= 1e-12


def test_diversity_invariant_to_constant_row_shift():
    rng = np.random.default_rng(2)
    H = rng.standard_normal((9, 5))
    c = rng.standard_normal(5)
    assert diversity(H + c) == pytest.approx(diversity(H), rel=1e-12)


def test_diversity_rejects_nonfinite():
    H = np.ones((3, 3))
    H[1, 1] = np.nan
    with pytest.raises(NonFiniteInputError):
        diversity(H)
    with pytest.raises(ValueError):
        diversity(np.ones(4))  # 1-D


def test_spectral_norm_against_svd():
    rng = np.random.default_rng(3)
    for _ in range(50):
        W = rng.standard_normal((int(rng.integers(2, 30)), int(rng.integers(2, 30))))
        truth = np.linalg.svd(W, compute_uv=False)[0]
        r = spectral_norm(W)
        assert r.converged
        assert r.s == pytest.approx(truth, rel=1e-8)


def test_spectral_norm_zero_matrix():
    r = spectral_norm(np.zeros((4, 6)))
    assert r.converged and r.s == 0.0


def test_projector_gram_against_eigh():
    rng = np.random.default_rng(4)
    for _ in range(30):
        X = rng.standard_normal((10, 10))
        B = X - X.mean(axis=0)
        truth = float(np.linalg.eigvalsh(B.T @ B)[-1])
        r = projector_gram_top_eig(X)
        assert r.converged
        assert r.lambda_max == pytest.approx(truth, rel=1e-8, abs=1e-12)


def test_attention_contraction_validation():
    with pytest.raises(ValueError):
        attention_contraction(np.ones((2, 3)))
    A = np.full((4, 4), 0.25)
    A[0, 0] = -0.1
    A[0, 1] = 0.6
    with pytest.raises(ValueError):
        attention_contraction(A)
    with pytest.raises(ValueError):
        attention_contraction(np.full((4, 4), 0.3))  # rows sum to 1.2


def test_uniform_attention_has_zero_contraction():
    A = np.full((8, 8), 1.0 / 8)
    r = attention_contraction(A)
    assert r.lambda_max <= 1e-12


def test_sinkhorn_doubly_stochastic_and_contractive():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(3, 20))
        A = rng.uniform(0.01, 1.0, size=(n, n))
        M = sinkhorn(A, 50)
        row_err, col_err = stochastic_error(M)
        assert row_err <= 1e-12
        assert col_err <= 1e-6
        lam = attention_contraction(M).lambda_max
        assert lam < 1.0


def test_contraction_bounds_diversity_of_product():
    rng = np.random.default_rng(6)
    for _ in range(30):
        n = int(rng.integers(3, 16))
        logits = rng.standard_normal((n, n))
        A = np.exp(logits)
        A /= A.sum(axis=1, keepdims=True)
        H = rng.standard_normal((n, 7))
        lam = attention_contraction(A).lambda_max
        assert diversity(A @ H) <= np.sqrt(lam) * diversity(H) * (1 + 1e-9)


def test_effective_dimension_against_svd_oracle():
    rng = np.random.default_rng(7)
    for _ in range(30):
        F = rng.standard_normal((25, 10))
        Fc = F - F.mean(axis=0)
        sv = np.linalg.svd(Fc, compute_uv=False) ** 2
        frac = np.cumsum(sv) / sv.sum()
        expect = int(np.searchsorted(frac, 0.8 - 1e-12) + 1)
        assert effective_dimension(F, 0.8) == expect


def test_effective_dimension_edge_cases():
    rng = np.random.default_rng(8)
    u = rng.standard_normal((12, 1))
    v = rng.standard_normal((1, 6))
    assert effective_dimension(u @ v, 0.8) == 1          # rank 1 after centering
    assert effective_dimension(np.ones((5, 4)), 0.8) == 0  # no variance
    F = rng.standard_normal((30, 6))
    assert effective_dimension(F, 1.0) == np.linalg.matrix_rank(F - F.mean(axis=0))
    with pytest.raises(ValueError):
        effective_dimension(F, 0.0)
    with pytest.raises(ValueError):
        effective_dimension(F[:1], 0.8)


def test_effective_dimension_row_permutation_invariance():
    rng = np.random.default_rng(9)
    F = rng.standard_normal((20, 8))
    perm = rng.permutation(20)
    assert effective_dimension(F, 0.8) == effective_dimension(F[perm], 0.8)


def test_pca_full_k_explains_everything():
    rng = np.random.default_rng(10)
    F = rng.standard_normal((15, 6))
    _, explained = pca_top_k(F, 6)
    assert explained == pytest.approx(1.0, abs=1e-12)


def test_pca_planted_low_dimensional_structure():
    rng = np.random.default_rng(11)
    basis = rng.standard_normal((3, 20))
    F = rng.standard_normal((100, 3)) @ basis + 1e-4 * rng.standard_normal((100, 20))
    coords, explained = pca_top_k(F, 3)
    assert explained >= 0.99
    assert coords.shape == (100, 3)


def test_pca_deterministic_sign_convention():
    rng = np.random.default_rng(12)
    F = rng.standard_normal((12, 5))
    c1, e1 = pca_top_k(F, 3)
    c2, e2 = pca_top_k(F.copy(), 3)
    assert np.array_equal(c1, c2) and e1 == e2


def test_pca_reconstruction_error_matches_discarded_variance():
    # coordinates in the top-k basis must capture exactly the top-k variance
    rng = np.random.default_rng(13)
    F = rng.standard_normal((30, 8))
    Fc = F - F.mean(axis=0)
    coords, explained = pca_top_k(F, 4)
    assert np.sum(coords ** 2) == pytest.approx(explained * np.sum(Fc ** 2), rel=1e-9)
