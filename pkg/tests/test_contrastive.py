"""Unit tests for the cross-embedding cosine alignment loss."""

import numpy as np
import pytest

from causalmvc.contrastive import (
    DegenerateInputError,
    contrastive_grads,
    contrastive_loss,
    similarity_matrix,
)
from causalmvc.nn import grad_check


def direct_loss(z):
    """Scalar-loop evaluation of the pull/push objective."""
    n = z.shape[0]
    pull = sum((z[i, i] - 1.0) ** 2 for i in range(n)) / n
    push = sum(
        z[i, j] ** 2 for i in range(n) for j in range(n) if i != j
    ) / (n * n - n)
    return pull + push


class TestSimilarityMatrix:
    def test_rows_are_cosines(self):
        a = np.array([[3.0, 0.0], [0.0, 2.0]])
        b = np.array([[1.0, 1.0], [0.0, 5.0]])
        z = similarity_matrix(a, b)
        np.testing.assert_allclose(z[0, 0], 1.0 / np.sqrt(2))
        np.testing.assert_allclose(z[1, 1], 1.0)
        np.testing.assert_allclose(z[1, 0], 1.0 / np.sqrt(2))

    def test_bounded_by_one_fuzzed(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            a = rng.standard_normal((6, 4))
            b = rng.standard_normal((6, 4))
            z = similarity_matrix(a, b)
            assert np.all(np.abs(z) <= 1.0 + 1e-12)

    def test_zero_row_rejected_with_location(self):
        a = np.array([[1.0, 0.0], [0.0, 0.0]])
        b = np.ones((2, 2))
        with pytest.raises(DegenerateInputError) as err:
            similarity_matrix(a, b)
        assert "1" in str(err.value)


class TestContrastiveLoss:
    def test_identity_similarity_is_exactly_zero(self):
        assert contrastive_loss(np.eye(5)) == 0.0

    def test_swapped_diagonal_oracle(self):
        # diagonal zeros pull cost 1, off-diagonal ones push cost 1
        z = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert contrastive_loss(z) == 2.0

    def test_all_ones_matrix_oracle(self):
        z = np.ones((2, 2))
        assert contrastive_loss(z) == 1.0

    def test_matches_scalar_loop_fuzzed(self):
        rng = np.random.default_rng(32)
        for _ in range(1000):
            n = int(rng.integers(2, 17))
            z = rng.uniform(-1, 1, size=(n, n))
            np.testing.assert_allclose(
                contrastive_loss(z), direct_loss(z), rtol=0, atol=1e-12
            )

    def test_single_sample_rejected(self):
        with pytest.raises(ValueError):
            contrastive_loss(np.array([[1.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            contrastive_loss(np.zeros((2, 3)))


class TestContrastiveGrads:
    def test_loss_value_matches_loss_function(self):
        rng = np.random.default_rng(33)
        a = rng.standard_normal((5, 3))
        b = rng.standard_normal((5, 3))
        loss, _, _ = contrastive_grads(a, b)
        np.testing.assert_allclose(loss, contrastive_loss(similarity_matrix(a, b)))

    def test_gradients_match_finite_differences_fuzzed(self):
        rng = np.random.default_rng(34)
        for trial in range(15):
            a = rng.standard_normal((4, 3)) + 0.1
            b = rng.standard_normal((4, 3)) + 0.1

            def loss_fn(params):
                loss, da, db = contrastive_grads(params[0], params[1])
                return loss, [da, db]

            worst = grad_check(loss_fn, [a, b])
            assert worst < 1e-6, f"trial {trial}: rel error {worst}"

    def test_perfectly_aligned_diagonal_has_no_pull_gradient(self):
        # identical rows give Z_ii = 1; only the push term drives gradients
        a = np.array([[1.0, 0.0], [0.0, 1.0]])
        loss, da, db = contrastive_grads(a, a.copy())
        np.testing.assert_allclose(loss, 0.0, atol=1e-15)
        np.testing.assert_allclose(da, np.zeros_like(a), atol=1e-15)
        np.testing.assert_allclose(db, np.zeros_like(a), atol=1e-15)

    def test_gradient_orthogonal_to_embedding_rows(self):
        # cosine depends only on direction, so row gradients have no radial part
        rng = np.random.default_rng(35)
        a = rng.standard_normal((6, 4))
        b = rng.standard_normal((6, 4))
        _, da, db = contrastive_grads(a, b)
        np.testing.assert_allclose(np.sum(da * a, axis=1), np.zeros(6), atol=1e-12)
        np.testing.assert_allclose(np.sum(db * b, axis=1), np.zeros(6), atol=1e-12)
