"""Prototype computation, distances, and the distance-softmax classifier."""

import numpy as np
import pytest

from gmixlab.errors import ContractError, TrainingError
from gmixlab.prototypes import (
    PrototypeSet,
    class_probabilities,
    compute_prototypes,
    predict,
    sq_euclidean,
)


def protos_from(rows, counts=None, epoch=None):
    rows = np.asarray(rows, dtype=np.float64)
    if counts is None:
        counts = np.ones(rows.shape[0], dtype=np.int64)
    return PrototypeSet(prototypes=rows, counts=np.asarray(counts), epoch=epoch)


class TestComputePrototypes:
    def test_single_embedding_per_class(self):
        out = compute_prototypes([(np.array([1.0, 2.0]), 0), (np.array([-3.0, 4.0]), 1)])
        np.testing.assert_allclose(out.prototypes, [[1.0, 2.0], [-3.0, 4.0]])
        np.testing.assert_array_equal(out.counts, [1, 1])

    def test_midpoint(self):
        out = compute_prototypes(
            [
                (np.array([0.0, 0.0]), 0),
                (np.array([2.0, 4.0]), 0),
                (np.array([5.0, 5.0]), 1),
            ]
        )
        np.testing.assert_allclose(out.prototypes[0], [1.0, 2.0])

    def test_matches_naive_summation_oracle(self):
        rng = np.random.default_rng(0)
        embeddings = [(rng.normal(size=4), int(rng.integers(0, 3))) for _ in range(50)]
        labels = [l for _, l in embeddings]
        for k in range(3):
            if k not in labels:
                embeddings.append((rng.normal(size=4), k))
        out = compute_prototypes(embeddings)
        for k in range(3):
            rows = [z for z, l in embeddings if l == k]
            naive = sum(rows) / len(rows)
            np.testing.assert_allclose(out.prototypes[k], naive, atol=1e-12)

    def test_empty_class_names_it(self):
        with pytest.raises(TrainingError, match="class 1"):
            compute_prototypes([(np.zeros(2), 0), (np.zeros(2), 2)], n_classes=3)

    def test_permuted_input_gives_identical_prototypes(self):
        rng = np.random.default_rng(1)
        embeddings = [(rng.normal(size=3), int(rng.integers(0, 2))) for _ in range(20)]
        embeddings.append((rng.normal(size=3), 0))
        embeddings.append((rng.normal(size=3), 1))
        a = compute_prototypes(embeddings)
        order = rng.permutation(len(embeddings))
        b = compute_prototypes([embeddings[i] for i in order])
        np.testing.assert_allclose(a.prototypes, b.prototypes, atol=1e-12)

    def test_epoch_stamp_recorded(self):
        out = compute_prototypes([(np.zeros(2), 0), (np.ones(2), 1)], epoch=7)
        assert out.epoch == 7


class TestSqEuclidean:
    def test_identical_vectors(self):
        assert sq_euclidean(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0

    def test_three_four_five(self):
        assert sq_euclidean(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == 25.0

    def test_random_matches_componentwise_oracle(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=6), rng.normal(size=6)
        expected = sum((x - y) ** 2 for x, y in zip(a, b))
        assert sq_euclidean(a, b) == pytest.approx(expected, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            sq_euclidean(np.zeros(2), np.zeros(3))


class TestClassProbabilities:
    def test_equidistant_gives_uniform(self):
        protos = protos_from([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        p = class_probabilities(np.zeros(2), protos)
        np.testing.assert_allclose(p, 0.25, atol=1e-12)

    def test_log9_distance_gap(self):
        # d = (0, ln 9) gives probabilities (0.9, 0.1)
        gap = np.sqrt(np.log(9.0))
        protos = protos_from([[0.0], [gap]])
        p = class_probabilities(np.array([0.0]), protos)
        np.testing.assert_allclose(p, [0.9, 0.1], atol=1e-12)

    def test_huge_distances_stay_finite(self):
        protos = protos_from([[np.sqrt(1000.0)], [np.sqrt(1001.0)]])
        p = class_probabilities(np.array([0.0]), protos)
        assert np.all(np.isfinite(p))
        np.testing.assert_allclose(p, [np.e / (1 + np.e), 1 / (1 + np.e)], atol=1e-9)
        np.testing.assert_allclose(p[0], 0.731, atol=5e-4)

    def test_sums_to_one(self):
        rng = np.random.default_rng(3)
        protos = protos_from(rng.normal(size=(5, 3)))
        for _ in range(10):
            p = class_probabilities(rng.normal(size=3), protos)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(p > 0)

    def test_distance_shift_invariance(self):
        # adding c to all squared distances means moving z so that every
        # d_k grows by c; probabilities must not change
        protos = protos_from([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -1.5]])
        rng = np.random.default_rng(4)
        z = rng.normal(size=3)
        base = class_probabilities(z, protos)
        d = ((protos.prototypes - z) ** 2).sum(axis=1)
        for c in (1.0, 10.0, 500.0):
            shifted = d + c
            logits = -(shifted - shifted.min())
            manual = np.exp(logits) / np.exp(logits).sum()
            np.testing.assert_allclose(manual, base, atol=1e-12)


class TestPredict:
    def test_nearest_prototype(self):
        protos = protos_from([[0.0, 0.0], [10.0, 10.0]])
        assert predict(np.array([1.0, 1.0]), protos) == 0
        assert predict(np.array([9.0, 9.0]), protos) == 1

    def test_exact_tie_takes_lower_index(self):
        protos = protos_from([[1.0, 0.0], [-1.0, 0.0]])
        assert predict(np.zeros(2), protos) == 0

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        protos = protos_from(rng.normal(size=(4, 3)))
        for _ in range(20):
            z = rng.normal(size=3)
            d = ((protos.prototypes - z) ** 2).sum(axis=1)
            for transform in (np.sqrt, lambda v: 3 * v + 7, np.log1p):
                assert predict(z, protos) == int(np.argmin(transform(d)))

    def test_dim_mismatch(self):
        protos = protos_from([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(ContractError):
            predict(np.zeros(3), protos)


class TestPrototypeSetValidation:
    def test_needs_two_classes(self):
        with pytest.raises(ContractError):
            protos_from([[0.0, 0.0]])

    def test_counts_must_be_positive(self):
        with pytest.raises(ContractError):
            PrototypeSet(prototypes=np.zeros((2, 2)), counts=np.array([1, 0]))
