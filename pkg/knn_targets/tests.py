import time
import unittest

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase
from hypothesis import given, settings as hypothesis_settings, strategies as st

from diffcore.exceptions import ParameterError
from knn_targets.search import (
    batch_query, exact_neighbors, merge_top_k, ooc_neighbors, ooc_neighbors_all, ooc_query,
    query_neighbors, recall_at_k,
)
from knn_targets.types import CandidateList, Dataset, NeighborTargets, OocConfig


def gaussian_dataset(n, d, seed, n_classes=2):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(n, d)), rng.integers(0, n_classes, size=n), n_classes)


def line_dataset(points):
    features = np.array([[p, 0.0] for p in points])
    return Dataset(features, np.arange(len(points)) % 2, 2)


def candidates(indices, distances):
    indices = np.asarray(indices, dtype=np.int64)
    return CandidateList(indices, np.asarray(distances, dtype=np.float64), indices % 2)


class DatasetTests(SimpleTestCase):
    """Tests for the Dataset container."""

    def test_rejects_label_outside_class_range(self):
        with self.assertRaises(ParameterError):
            Dataset(np.zeros((2, 2)), [0, 2], 2)

    def test_rejects_single_class(self):
        with self.assertRaises(ParameterError):
            Dataset(np.zeros((2, 2)), [0, 0], 1)

    def test_subset_keeps_metadata(self):
        data = gaussian_dataset(10, 3, seed=0)
        part = data.subset(np.array([3, 1]))
        np.testing.assert_array_equal(part.features, data.features[[3, 1]])
        self.assertEqual(part.n_classes, 2)


class QueryNeighborsTests(SimpleTestCase):
    """Tests for single-query exact search."""

    def test_self_exclusion(self):
        reference = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
        indices, distances = query_neighbors(reference, reference[0], 2, exclude=0)
        np.testing.assert_array_equal(indices, [1, 2])
        np.testing.assert_allclose(distances, [1.0, 3.0])

    def test_k_equals_reference_size_orders_everything(self):
        reference = np.array([[5.0], [1.0], [3.0]])
        indices, _ = query_neighbors(reference, np.array([0.0]), 3)
        np.testing.assert_array_equal(indices, [1, 2, 0])

    def test_duplicate_points_lower_index_first(self):
        reference = np.array([[2.0], [1.0], [1.0], [1.0]])
        indices, distances = query_neighbors(reference, np.array([0.0]), 3)
        np.testing.assert_array_equal(indices, [1, 2, 3])
        np.testing.assert_array_equal(distances, [1.0, 1.0, 1.0])

    def test_too_few_candidates_names_counts(self):
        reference = np.zeros((3, 2))
        with self.assertRaises(ParameterError) as ctx:
            query_neighbors(reference, np.zeros(2), 3, exclude=0)
        self.assertIn('3 neighbors required', str(ctx.exception))
        self.assertIn('2 candidates', str(ctx.exception))

    def test_accepts_dataset(self):
        data = line_dataset([0.0, 1.0, 2.0])
        indices, _ = query_neighbors(data, np.array([2.1, 0.0]), 1)
        np.testing.assert_array_equal(indices, [2])


class ExactNeighborsTests(SimpleTestCase):
    """Tests for exact target generation."""

    def test_collinear_points_tie_to_lower_index(self):
        targets = exact_neighbors(line_dataset([0.0, 1.0, 2.0, 4.0]), 2)
        np.testing.assert_array_equal(targets.indices[1], [0, 2])
        np.testing.assert_allclose(targets.distances[1], [1.0, 1.0])

    def test_duplicate_samples_have_zero_distance(self):
        targets = exact_neighbors(line_dataset([0.0, 5.0, 0.0, 9.0]), 1)
        self.assertEqual(targets.indices[2, 0], 0)
        self.assertEqual(targets.distances[2, 0], 0.0)

    def test_never_its_own_neighbor_and_sorted(self):
        data = gaussian_dataset(200, 4, seed=3)
        targets = exact_neighbors(data, 5)
        self.assertFalse(np.any(targets.indices == np.arange(200)[:, None]))
        self.assertTrue(np.all(np.diff(targets.distances, axis=1) >= 0))

    def test_matches_brute_force(self):
        data = gaussian_dataset(120, 3, seed=4)
        targets = exact_neighbors(data, 4)
        diff = data.features[:, None, :] - data.features[None, :, :]
        full = np.sqrt((diff * diff).sum(axis=-1))
        np.fill_diagonal(full, np.inf)
        np.testing.assert_allclose(targets.distances[:, 0], full.min(axis=1))
        np.testing.assert_array_equal(targets.vectors, data.features[targets.indices])
        np.testing.assert_array_equal(targets.labels, data.labels[targets.indices])

    def test_requires_more_samples_than_k(self):
        with self.assertRaises(ParameterError):
            exact_neighbors(line_dataset([0.0, 1.0]), 2)

    def test_workers_do_not_change_result(self):
        data = gaussian_dataset(300, 5, seed=5)
        single = batch_query(data.features, data.features, 5, exclude=np.arange(300), workers=1)
        many = batch_query(data.features, data.features, 5, exclude=np.arange(300), workers=4)
        np.testing.assert_array_equal(single[0], many[0])
        np.testing.assert_array_equal(single[1], many[1])

    def test_row_permutation_permutes_neighbors(self):
        data = gaussian_dataset(80, 3, seed=6)
        perm = np.random.default_rng(7).permutation(80)
        original = exact_neighbors(data, 3)
        permuted = exact_neighbors(data.subset(perm), 3)
        np.testing.assert_allclose(permuted.distances, original.distances[perm])
        np.testing.assert_array_equal(perm[permuted.indices], original.indices[perm])


class MergeTopKTests(SimpleTestCase):
    """Tests for the running top-K merge."""

    def test_empty_current(self):
        merged = merge_top_k(CandidateList(), candidates([7, 3, 5], [3.0, 1.0, 2.0]), 5)
        np.testing.assert_array_equal(merged.indices, [3, 5, 7])

    def test_hand_sorted_union(self):
        merged = merge_top_k(candidates([10, 11], [1.0, 4.0]), candidates([12, 13, 14], [2.0, 3.0, 9.0]), 3)
        np.testing.assert_array_equal(merged.distances, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(merged.indices, [10, 12, 13])

    def test_duplicate_sources_collapse(self):
        merged = merge_top_k(candidates([4, 2], [1.0, 2.0]), candidates([2, 9], [2.0, 5.0]), 3)
        np.testing.assert_array_equal(merged.indices, [4, 2, 9])

    def test_vectors_follow_their_candidates(self):
        current = CandidateList(np.array([0]), np.array([2.0]), np.array([0]), np.array([[0.0, 2.0]]))
        new = CandidateList(np.array([1]), np.array([1.0]), np.array([1]), np.array([[1.0, 0.0]]))
        merged = merge_top_k(current, new, 2)
        np.testing.assert_array_equal(merged.vectors, [[1.0, 0.0], [0.0, 2.0]])
        np.testing.assert_array_equal(merged.labels, [1, 0])

    @given(
        st.lists(st.tuples(st.integers(0, 30), st.integers(0, 10)), min_size=1, max_size=20),
        st.integers(1, 6),
    )
    @hypothesis_settings(max_examples=50, deadline=None)
    def test_merge_with_itself_is_idempotent(self, pairs, k):
        # one distance per source index, as in real searches
        by_index = dict(pairs)
        current = merge_top_k(CandidateList(), candidates(list(by_index), [float(v) for v in by_index.values()]), k)
        again = merge_top_k(current, current, k)
        np.testing.assert_array_equal(again.indices, current.indices)
        np.testing.assert_array_equal(again.distances, current.distances)


class OocNeighborsTests(SimpleTestCase):
    """Tests for out-of-core target generation."""

    def test_batch_must_exceed_k(self):
        with self.assertRaises(ParameterError):
            ooc_neighbors(gaussian_dataset(20, 2, seed=0), 5, OocConfig(batch=5, rounds=1), 0)

    def test_rounds_must_be_positive(self):
        with self.assertRaises(ParameterError):
            OocConfig(batch=10, rounds=0)

    def test_full_coverage_equals_exact(self):
        data = gaussian_dataset(1000, 10, seed=1)
        exact = exact_neighbors(data, 5)
        approx = ooc_neighbors_all(data, 5, OocConfig(batch=1000, rounds=1, seed=3, full_coverage=True))
        np.testing.assert_array_equal(approx.indices, exact.indices)
        np.testing.assert_allclose(approx.distances, exact.distances)

    def test_single_sample_full_coverage_equals_exact(self):
        data = gaussian_dataset(60, 3, seed=2)
        exact = exact_neighbors(data, 4)
        found = ooc_neighbors(data, 4, OocConfig(batch=60, rounds=1, full_coverage=True), 17)
        np.testing.assert_array_equal(found.indices, exact.indices[17])

    def test_vectorized_matches_per_sample(self):
        data = gaussian_dataset(150, 4, seed=8)
        cfg = OocConfig(batch=16, rounds=4, seed=11)
        every = ooc_neighbors_all(data, 3, cfg, epoch=2)
        for index in (0, 41, 149):
            single = ooc_neighbors(data, 3, cfg, index, epoch=2)
            np.testing.assert_array_equal(every.indices[index], single.indices)
            np.testing.assert_array_equal(every.vectors[index], single.vectors)

    def test_never_its_own_neighbor(self):
        data = gaussian_dataset(40, 2, seed=9)
        targets = ooc_neighbors_all(data, 3, OocConfig(batch=20, rounds=5, seed=1))
        self.assertFalse(np.any(targets.indices == np.arange(40)[:, None]))
        self.assertTrue(np.all(np.diff(targets.distances, axis=1) >= 0))

    def test_minimal_configuration(self):
        data = gaussian_dataset(200, 2, seed=10)
        targets = ooc_neighbors_all(data, 5, OocConfig(batch=6, rounds=1))
        self.assertEqual(targets.indices.shape, (200, 5))
        for row in targets.indices:
            self.assertEqual(len(set(row)), 5)

    def test_too_few_candidates(self):
        data = gaussian_dataset(3, 2, seed=12)
        with self.assertRaises(ParameterError):
            ooc_neighbors_all(data, 3, OocConfig(batch=4, rounds=1, full_coverage=True))
        with self.assertRaises(ParameterError):
            ooc_neighbors(data, 3, OocConfig(batch=4, rounds=1, full_coverage=True), 0)

    def test_workers_and_epochs(self):
        data = gaussian_dataset(200, 3, seed=13)
        cfg = OocConfig(batch=20, rounds=3, seed=2)
        one = ooc_neighbors_all(data, 3, cfg, workers=1)
        four = ooc_neighbors_all(data, 3, cfg, workers=4)
        np.testing.assert_array_equal(one.indices, four.indices)
        other_epoch = ooc_neighbors_all(data, 3, cfg, epoch=1)
        self.assertFalse(np.array_equal(one.indices, other_epoch.indices))

    def test_rows_subset_uses_per_sample_streams(self):
        data = gaussian_dataset(100, 3, seed=14)
        cfg = OocConfig(batch=20, rounds=3, seed=5)
        every = ooc_neighbors_all(data, 3, cfg)
        some = ooc_neighbors_all(data, 3, cfg, rows=np.array([7, 70]))
        np.testing.assert_array_equal(some.indices, every.indices[[7, 70]])

    def test_external_queries(self):
        data = gaussian_dataset(50, 2, seed=15)
        queries = data.features[:3] + 1e-3
        indices, _ = ooc_query(
            data.features, queries, 1, OocConfig(batch=50, rounds=1, full_coverage=True), keys=np.arange(3)
        )
        np.testing.assert_array_equal(indices[:, 0], [0, 1, 2])

    def test_recall_is_nondecreasing_in_rounds(self):
        data = gaussian_dataset(1000, 5, seed=16)
        exact = exact_neighbors(data, 5)
        for seed in range(5):
            recalls = [
                recall_at_k(ooc_neighbors_all(data, 5, OocConfig(batch=64, rounds=r, seed=seed)), exact)
                for r in (1, 5, 20, 50)
            ]
            self.assertEqual(recalls, sorted(recalls))


class RecallTests(SimpleTestCase):
    """Tests for recall@K."""

    def test_values(self):
        exact = np.array([[1, 2], [3, 4]])
        self.assertEqual(recall_at_k(exact, exact), 1.0)
        self.assertEqual(recall_at_k(np.array([[2, 9], [8, 9]]), exact), 0.25)

    def test_accepts_targets(self):
        targets = NeighborTargets(np.zeros((1, 2)), np.zeros((1, 2, 1)), np.zeros((1, 2)), np.array([[0, 1]]))
        self.assertEqual(recall_at_k(targets, targets), 1.0)

    def test_shape_mismatch(self):
        with self.assertRaises(ParameterError):
            recall_at_k(np.zeros((2, 2)), np.zeros((2, 3)))


@unittest.skipUnless(settings.KNN_SLOW_TESTS, 'set KNN_SLOW_TESTS=True to run acceptance checks')
class OocRecallAcceptanceTests(SimpleTestCase):
    """Recall of out-of-core targets on 10,000 points."""

    def test_recall_grows_with_rounds(self):
        data = gaussian_dataset(10000, 10, seed=0)
        exact = exact_neighbors(data, 5)
        means = []
        for rounds in (1, 5, 20, 50):
            recalls = [
                recall_at_k(ooc_neighbors_all(data, 5, OocConfig(batch=64, rounds=rounds, seed=seed)), exact)
                for seed in range(5)
            ]
            means.append(float(np.mean(recalls)))
        self.assertEqual(means, sorted(means))
        self.assertGreater(means[-1] - means[0], 0.1)


@unittest.skipUnless(settings.KNN_SLOW_TESTS, 'set KNN_SLOW_TESTS=True to run acceptance checks')
class OocPreparationTimingTests(SimpleTestCase):
    """Out-of-core preparation against exact search on 100,000 points of dimension 100."""

    def test_ooc_is_faster_than_exact(self):
        data = gaussian_dataset(100000, 100, seed=0)

        started = time.perf_counter()
        exact_neighbors(data, 5)
        exact_seconds = time.perf_counter() - started

        started = time.perf_counter()
        ooc_neighbors_all(data, 5, OocConfig(batch=64, rounds=50))
        ooc_seconds = time.perf_counter() - started

        self.assertLessEqual(ooc_seconds, 0.8 * exact_seconds)
