import itertools

import numpy as np
import pytest

from errors import DimensionError, ParameterError
from tensor_core import (
    EmbeddingMatrix,
    FeatureMap,
    MaskVector,
    embeddings_to_feature_map,
    embeddings_to_feature_maps,
    instance_normalize,
    l2_normalize_rows,
    matmul,
    reshape_to_embeddings,
)


class TestFeatureMap:
    def test_from_flat_checks_length(self):
        with pytest.raises(DimensionError):
            FeatureMap.from_flat(2, 2, 2, np.zeros(7))

    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            FeatureMap(np.array([[[np.nan]]]))

    def test_data_is_read_only(self, random_map):
        fm = random_map()
        with pytest.raises(ValueError):
            fm.data[0, 0, 0] = 1.0


class TestReshape:
    def test_singleton(self):
        X = reshape_to_embeddings(FeatureMap.from_flat(1, 1, 1, [5.0]))
        np.testing.assert_array_equal(X.data, [[5.0]])

    def test_channel_major_to_rows(self):
        a0, a1, b0, b1 = 1.0, 2.0, 3.0, 4.0
        X = reshape_to_embeddings(FeatureMap.from_flat(2, 1, 2, [a0, a1, b0, b1]))
        np.testing.assert_array_equal(X.data, [[a0, b0], [a1, b1]])

    def test_round_trip_exhaustive(self, rng):
        for c, h, w in itertools.product(range(1, 7), repeat=3):
            fm = FeatureMap(rng.standard_normal((c, h, w)))
            X = reshape_to_embeddings(fm)
            assert X.rows == h * w and X.cols == c
            np.testing.assert_array_equal(embeddings_to_feature_map(X, h, w).data, fm.data)

    def test_ensemble_concatenates_template_by_template(self, random_map):
        mapas = [random_map(3, 2, 2) for _ in range(3)]
        X = reshape_to_embeddings(mapas)
        assert X.rows == 12 and X.block_rows == 4
        for original, volta in zip(mapas, embeddings_to_feature_maps(X, 2, 2)):
            np.testing.assert_array_equal(original.data, volta.data)

    def test_ensemble_shape_mismatch(self, random_map):
        with pytest.raises(DimensionError):
            reshape_to_embeddings([random_map(3, 2, 2), random_map(3, 2, 3)])


class TestMatmul:
    def test_identity(self, rng):
        X = EmbeddingMatrix(rng.standard_normal((4, 4)))
        np.testing.assert_array_equal(matmul(EmbeddingMatrix(np.eye(4)), X).data, X.data)

    def test_hand_product(self):
        A = EmbeddingMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]))
        B = EmbeddingMatrix(np.array([[5.0], [6.0]]))
        np.testing.assert_array_equal(matmul(A, B).data, [[17.0], [39.0]])

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(EmbeddingMatrix(np.ones((2, 3))), EmbeddingMatrix(np.ones((4, 2))))

    def test_matches_triple_loop(self, rng):
        A, B = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
        esperado = np.zeros((8, 8))
        for i in range(8):
            for j in range(8):
                for k in range(8):
                    esperado[i, j] += A[i, k] * B[k, j]
        obtido = matmul(EmbeddingMatrix(A), EmbeddingMatrix(B)).data
        np.testing.assert_allclose(obtido, esperado, rtol=1e-12, atol=1e-12)


class TestL2NormalizeRows:
    def test_three_four_five(self):
        X = l2_normalize_rows(EmbeddingMatrix(np.array([[3.0, 4.0]])))
        np.testing.assert_allclose(X.data, [[0.6, 0.8]])

    def test_zero_row_preserved(self):
        X = l2_normalize_rows(EmbeddingMatrix(np.zeros((1, 2))), eps=1e-12)
        np.testing.assert_array_equal(X.data, [[0.0, 0.0]])

    def test_unit_row_unchanged(self):
        X = l2_normalize_rows(EmbeddingMatrix(np.array([[0.0, 1.0, 0.0]])))
        np.testing.assert_array_equal(X.data, [[0.0, 1.0, 0.0]])

    def test_norms_bounded(self, random_embeddings):
        normas = np.linalg.norm(l2_normalize_rows(random_embeddings(20, 5)).data, axis=1)
        assert np.all(normas <= 1 + 1e-12)
        np.testing.assert_allclose(normas, 1.0, atol=1e-12)

    def test_rejects_non_positive_eps(self, random_embeddings):
        with pytest.raises(ParameterError):
            l2_normalize_rows(random_embeddings(), eps=0.0)


class TestInstanceNormalize:
    def test_all_ones_patch(self):
        X = reshape_to_embeddings(FeatureMap(np.ones((1, 2, 2))))
        np.testing.assert_allclose(instance_normalize(X).data, 0.5)

    def test_zero_patch(self):
        X = reshape_to_embeddings(FeatureMap(np.zeros((2, 2, 2))))
        np.testing.assert_array_equal(instance_normalize(X).data, 0.0)

    @pytest.mark.parametrize("alpha", [0.5, 2.0, 100.0])
    def test_scale_invariance(self, random_embeddings, alpha):
        X = random_embeddings(12, 3, block_rows=4)
        escalado = EmbeddingMatrix(X.data * alpha, X.block_rows)
        np.testing.assert_allclose(
            instance_normalize(escalado).data, instance_normalize(X).data, atol=1e-12
        )

    def test_each_block_normalized_independently(self, random_embeddings):
        Y = instance_normalize(random_embeddings(12, 3, block_rows=4))
        for i in range(3):
            assert np.linalg.norm(Y.block(i).data) == pytest.approx(1.0, abs=1e-12)

    def test_count_rescale(self, random_embeddings):
        Y = instance_normalize(random_embeddings(9, 2, block_rows=9), count_rescale=True)
        assert np.linalg.norm(Y.data) == pytest.approx(3.0, abs=1e-12)


class TestMaskVector:
    def test_range_enforced(self):
        with pytest.raises(ParameterError):
            MaskVector(np.array([0.5, 1.2]))

    def test_concat(self):
        M = MaskVector.concat([MaskVector(np.array([0.1])), MaskVector(np.array([0.2, 0.3]))])
        np.testing.assert_array_equal(M.data, [0.1, 0.2, 0.3])
