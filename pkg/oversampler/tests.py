import unittest

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase
from hypothesis import given, settings as hypothesis_settings, strategies as st

from diffcore.exceptions import DimensionError, ParameterError
from experiments.synthetic import two_gaussians
from knn_targets.search import batch_query, exact_neighbors
from knn_targets.types import Dataset
from oversampler.interpolation import adasyn, adasyn_allocation, interpolate, smote
from oversampler.model_based import generate_synthetic_model, oversample
from oversampler.types import AugmentedDataset, OversampleConfig, class_deficits
from training_eval.checkpoint import Checkpoint
from training_eval.config import TrainConfig
from training_eval.evaluation import baseline_knn_classify
from training_eval.factory import build_model, run_forward
from training_eval.trainer import Trainer


def favoring_checkpoint(kind, d, n_classes, favored, k=5):
    """Untrained model whose label head always claims ``favored``."""
    config = TrainConfig(kind=kind, k=k, hidden=8, embedding=6, memory_size=4, validation_fraction=0.0)
    model = build_model(config, d, n_classes)
    model.W_y.data[...] = 0.0
    model.b_y.data[...] = 0.0
    model.b_y.data[favored] = 50.0
    return Checkpoint.from_model(model, config, np.arange(n_classes, dtype=np.float64))


class OversampleConfigTests(SimpleTestCase):
    """Tests for configuration validation."""

    def test_rejects_bad_values(self):
        with self.assertRaises(ParameterError):
            OversampleConfig(method='borderline')
        with self.assertRaises(ParameterError):
            OversampleConfig(smote_k=0)
        with self.assertRaises(ParameterError):
            OversampleConfig(ratio=0.0)

    def test_method_spelling(self):
        self.assertEqual(OversampleConfig(method=' ADASYN ').method, 'adasyn')


class AugmentedDatasetTests(SimpleTestCase):
    """Tests for the augmented dataset container."""

    def setUp(self):
        self.original = Dataset(np.arange(8.0).reshape(4, 2), [0, 0, 0, 1], 2)

    def test_deficits(self):
        np.testing.assert_array_equal(class_deficits(self.original), [0, 2])
        np.testing.assert_array_equal(class_deficits(self.original, ratio=0.5), [0, 1])

    def test_combined_keeps_originals_first(self):
        augmented = AugmentedDataset(
            original=self.original, method='smote', features=[[1.0, 1.0]], labels=[1], sources=[3], ranks=[2]
        )
        combined = augmented.combined()
        np.testing.assert_array_equal(combined.features[:4], self.original.features)
        np.testing.assert_array_equal(combined.labels, [0, 0, 0, 1, 1])
        self.assertEqual(augmented.origins(), ['original'] * 4 + ['smote:3:2'])
        np.testing.assert_array_equal(augmented.class_counts(), [3, 2])

    def test_misaligned_rows(self):
        with self.assertRaises(DimensionError):
            AugmentedDataset(original=self.original, method='smote', features=[[1.0, 1.0]], labels=[1, 1],
                             sources=[3], ranks=[1])


class SmoteTests(SimpleTestCase):
    """Tests for SMOTE."""

    def test_endpoints(self):
        base, neighbor = np.array([[0.0, 1.0]]), np.array([[2.0, 3.0]])
        np.testing.assert_array_equal(interpolate(base, neighbor, np.array([0.0])), base)
        np.testing.assert_array_equal(interpolate(base, neighbor, np.array([1.0])), neighbor)

    def test_two_point_minority_stays_on_axis(self):
        features = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [5.0, 6.0], [6.0, 5.0], [6.0, 6.0]])
        train = Dataset(features, [1, 1, 0, 0, 0, 0], 2)
        augmented = smote(train, OversampleConfig(smote_k=1))
        self.assertEqual(augmented.n_synthetic, 2)
        np.testing.assert_array_equal(augmented.features[:, 1], 0.0)
        self.assertTrue(np.all((augmented.features[:, 0] >= 0.0) & (augmented.features[:, 0] <= 1.0)))

    def test_balances_and_labels_minority(self):
        train = two_gaussians(120, 3, ratio=3.0, seed=2)
        augmented = smote(train, OversampleConfig())
        counts = augmented.class_counts()
        self.assertEqual(counts[0], counts[1])
        np.testing.assert_array_equal(augmented.labels, 1)
        np.testing.assert_array_equal(train.labels[augmented.sources], 1)

    def test_deterministic(self):
        train = two_gaussians(120, 3, ratio=3.0, seed=2)
        a = smote(train, OversampleConfig(seed=4))
        b = smote(train, OversampleConfig(seed=4))
        np.testing.assert_array_equal(a.features, b.features)
        c = smote(train, OversampleConfig(seed=5))
        self.assertFalse(np.array_equal(a.features, c.features))

    def test_collinearity_on_ten_thousand_points(self):
        train = two_gaussians(11000, 4, ratio=21.0, seed=3)
        cfg = OversampleConfig(smote_k=5, seed=1)
        augmented = smote(train, cfg)
        self.assertEqual(augmented.n_synthetic, 10000)

        rows = np.flatnonzero(train.labels == 1)
        neighbors, _ = batch_query(train.features[rows], train.features[rows], 5, exclude=np.arange(len(rows)))
        position = np.searchsorted(rows, augmented.sources)
        x_i = train.features[augmented.sources]
        x_z = train.features[rows[neighbors[position, augmented.ranks - 1]]]
        s = augmented.features
        gap = (np.linalg.norm(s - x_i, axis=1) + np.linalg.norm(s - x_z, axis=1)
               - np.linalg.norm(x_i - x_z, axis=1))
        self.assertLess(np.abs(gap).max(), 1e-9)

    def test_minority_too_small(self):
        features = np.arange(12.0).reshape(6, 2)
        with self.assertRaises(ParameterError):
            smote(Dataset(features, [0, 0, 0, 0, 1, 1], 2), OversampleConfig(smote_k=2))

    def test_balanced_input_is_untouched(self):
        train = two_gaussians(40, 2, seed=1)
        self.assertEqual(smote(train, OversampleConfig()).n_synthetic, 0)


class AdasynTests(SimpleTestCase):
    """Tests for ADASYN and its allocation rule."""

    def test_hand_allocation(self):
        np.testing.assert_array_equal(adasyn_allocation([0.2, 0.8], 10), [2, 8])

    def test_uniform_fallback_warns(self):
        with self.assertLogs('oversampler.interpolation', level='WARNING'):
            allocation = adasyn_allocation([0.0, 0.0, 0.0, 0.0], 8)
        np.testing.assert_array_equal(allocation, [2, 2, 2, 2])

    @given(
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=30),
        st.integers(min_value=0, max_value=500),
    )
    @hypothesis_settings(max_examples=100, deadline=None)
    def test_allocation_rounding_bound(self, ratios, total):
        allocation = adasyn_allocation(ratios, total)
        self.assertTrue(np.all(allocation >= 0))
        self.assertLessEqual(abs(int(allocation.sum()) - total), len(ratios))

    def test_interior_minority_gets_nothing(self):
        majority = [[0, 0], [0, 1], [1, 0], [1, 1], [0, 2], [2, 0], [2, 2], [1, 2]]
        minority = [[10, 10], [10, 11], [11, 10], [0.5, 0.5]]
        train = Dataset(np.array(majority + minority, dtype=np.float64), [0] * 8 + [1] * 4, 2)
        augmented = adasyn(train, OversampleConfig(method='adasyn', smote_k=2))
        self.assertEqual(augmented.n_synthetic, 4)
        np.testing.assert_array_equal(augmented.sources, 11)

    def test_allocation_close_to_deficit(self):
        train = two_gaussians(330, 3, ratio=10.0, separation=2.0, seed=4)
        augmented = adasyn(train, OversampleConfig(method='adasyn'))
        minority = int((train.labels == 1).sum())
        deficit = int(class_deficits(train)[1])
        self.assertLessEqual(abs(augmented.n_synthetic - deficit), minority)
        np.testing.assert_array_equal(augmented.labels, 1)


class ModelOversamplingTests(SimpleTestCase):
    """Tests for oversampling with a vector-predicting model."""

    def test_balanced_input_yields_nothing(self):
        train = two_gaussians(40, 3, seed=1)
        checkpoint = favoring_checkpoint('v2vsls', 3, 2, favored=1)
        self.assertEqual(generate_synthetic_model(checkpoint, train, OversampleConfig(method='model')).n_synthetic, 0)

    def test_stops_at_balance_in_source_order(self):
        train = two_gaussians(60, 3, ratio=2.0, seed=1)
        checkpoint = favoring_checkpoint('v2vsls', 3, 2, favored=1)
        augmented = generate_synthetic_model(checkpoint, train, OversampleConfig(method='model'))
        self.assertEqual(augmented.n_synthetic, 20)
        self.assertFalse(augmented.exhausted)
        minority = np.flatnonzero(train.labels == 1)
        np.testing.assert_array_equal(augmented.sources, np.repeat(minority[:4], 5))
        np.testing.assert_array_equal(augmented.ranks, np.tile(np.arange(1, 6), 4))
        vectors = run_forward(checkpoint.build_model(), train.features[minority[:4]]).vectors()
        np.testing.assert_allclose(augmented.features, vectors.reshape(20, 3), rtol=1e-12, atol=1e-12)

    def test_runs_out_of_sources(self):
        train = two_gaussians(110, 3, ratio=10.0, seed=1)
        checkpoint = favoring_checkpoint('v2vsls', 3, 2, favored=1)
        augmented = generate_synthetic_model(checkpoint, train, OversampleConfig(method='model'))
        self.assertTrue(augmented.exhausted)
        self.assertEqual(augmented.n_synthetic, 5 * int((train.labels == 1).sum()))

    def test_majority_claims_are_rejected(self):
        train = two_gaussians(60, 3, ratio=2.0, seed=1)
        checkpoint = favoring_checkpoint('v2vsls', 3, 2, favored=0)
        augmented = generate_synthetic_model(checkpoint, train, OversampleConfig(method='model'))
        self.assertEqual(augmented.n_synthetic, 0)
        self.assertTrue(augmented.exhausted)

    def test_memory_vector_model(self):
        train = two_gaussians(60, 3, ratio=2.0, seed=1)
        checkpoint = favoring_checkpoint('mnknn_vec', 3, 2, favored=1)
        cfg = OversampleConfig(method='model', seed=2)
        first = generate_synthetic_model(checkpoint, train, cfg)
        again = oversample(train, cfg, checkpoint=checkpoint)
        self.assertEqual(first.n_synthetic, 20)
        np.testing.assert_array_equal(first.features, again.features)

    def test_label_only_model_is_rejected(self):
        train = two_gaussians(60, 3, ratio=2.0, seed=1)
        with self.assertRaises(ParameterError):
            generate_synthetic_model(favoring_checkpoint('v2ls', 3, 2, favored=1), train, OversampleConfig())

    def test_dispatch_needs_checkpoint(self):
        with self.assertRaises(ParameterError):
            oversample(two_gaussians(60, 3, ratio=2.0), OversampleConfig(method='model'))


@unittest.skipUnless(settings.KNN_SLOW_TESTS, 'set KNN_SLOW_TESTS=True to run acceptance checks')
class OversamplingAcceptanceTests(SimpleTestCase):
    """Downstream kNN minority F-1 before and after model-based augmentation."""

    def test_model_oversampling_keeps_minority_f1(self):
        before, after = [], []
        for seed in range(3):
            train = two_gaussians(1100, 4, ratio=10.0, separation=2.0, seed=seed)
            test = two_gaussians(1100, 4, ratio=10.0, separation=2.0, seed=50 + seed)
            config = TrainConfig.from_settings(kind='v2vsls', epochs=15, seed=seed, lam=1.3, alpha=3.0)
            checkpoint = Trainer(config).train(train, exact_neighbors(train, 5)).checkpoint
            augmented = generate_synthetic_model(checkpoint, train, OversampleConfig(method='model', seed=seed))
            before.append(baseline_knn_classify(train, test, 5).f1[1])
            after.append(baseline_knn_classify(augmented.combined(), test, 5).f1[1])
        self.assertGreaterEqual(np.mean(after), np.mean(before))
