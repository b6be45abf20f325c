import unittest
from pathlib import Path
from unittest import mock

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase
from hypothesis import given, settings as hypothesis_settings, strategies as st

from diffcore.exceptions import DimensionError, ParameterError
from diffcore.tensor import Parameter
from experiments.synthetic import two_gaussians
from knn_targets.search import exact_neighbors
from knn_targets.types import Dataset, NeighborTargets, OocConfig
from memnet_knn.models import draw_memory
from training_eval.checkpoint import Checkpoint
from training_eval.config import TrainConfig, normalize_kind
from training_eval.evaluation import (
    baseline_knn_classify, classification_metrics, macro_f1, majority_vote, predict_label, predict_labels,
    predict_proba, swap_targets_ablation,
)
from training_eval.factory import build_model, run_forward
from training_eval.optim import Adam, AdamState, adam_step
from training_eval.trainer import Trainer, minibatches, split_rows


def small_config(**overrides):
    options = dict(kind='v2vsls', epochs=3, hidden=12, embedding=8, memory_size=8, k=3, validation_fraction=0.0)
    options.update(overrides)
    return TrainConfig(**options)


def reference_set(n=40, d=3, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(n, d)), rng.integers(0, 3, size=n), 3)


class AdamTests(SimpleTestCase):
    """Tests for the Adam update."""

    def test_zero_gradient_leaves_parameters(self):
        params = {'w': np.array([1.0, -2.0])}
        adam_step(params, {'w': np.zeros(2)}, AdamState(), lr=0.1)
        np.testing.assert_array_equal(params['w'], [1.0, -2.0])

    def test_first_step_moves_by_learning_rate(self):
        params = {'w': np.array([0.0, 0.0])}
        adam_step(params, {'w': np.array([0.3, -7.0])}, AdamState(), lr=0.01)
        np.testing.assert_allclose(params['w'], [-0.01, 0.01], rtol=1e-6)

    def test_converges_on_quadratic(self):
        w = Parameter('w', [0.0])
        optimizer = Adam([w], lr=0.1)
        for _ in range(200):
            w.grad = 2.0 * (w.data - 3.0)
            optimizer.step()
        self.assertLess(abs(w.data[0] - 3.0), 0.1)

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            adam_step({'w': np.zeros(2)}, {'w': np.zeros(3)}, AdamState())


class TrainConfigTests(SimpleTestCase):
    """Tests for configuration defaults and validation."""

    def test_defaults_from_settings(self):
        config = TrainConfig.from_settings()
        self.assertEqual((config.k, config.tau, config.alpha, config.lam), (5, 0.85, 9.5, 0.12))
        self.assertEqual((config.lr, config.beta1, config.beta2, config.eps), (0.01, 0.9, 0.999, 1e-8))
        self.assertEqual(config.dropout, 0.2)

    def test_ooc_mode_gets_default_sampling(self):
        config = TrainConfig(mode='ooc')
        self.assertEqual((config.ooc.batch, config.ooc.rounds), (64, 50))

    def test_rejects_small_ooc_batch(self):
        with self.assertRaises(ParameterError):
            TrainConfig(mode='ooc', k=5, ooc=OocConfig(batch=5, rounds=1))

    def test_rejects_zero_k(self):
        with self.assertRaisesMessage(ParameterError, 'K must be at least 1'):
            TrainConfig(k=0)

    def test_kind_spelling(self):
        self.assertEqual(normalize_kind('mnknn-vec'), 'mnknn_vec')
        with self.assertRaises(ParameterError):
            normalize_kind('svm')

    def test_dict_round_trip(self):
        config = TrainConfig(mode='ooc', ooc=OocConfig(batch=10, rounds=2, seed=3))
        self.assertEqual(TrainConfig.from_dict(config.to_dict()), config)


class MetricsTests(SimpleTestCase):
    """Tests for macro F-1 and the confusion matrix."""

    def test_perfect_predictions(self):
        self.assertEqual(macro_f1([0, 1, 1, 0], [0, 1, 1, 0], 2), 1.0)

    def test_all_wrong(self):
        self.assertEqual(macro_f1([1, 0, 1, 0], [0, 1, 0, 1], 2), 0.0)

    def test_hand_confusion_matrix(self):
        metrics = classification_metrics([1, 0, 1, 0], [1, 1, 0, 0], 2)
        np.testing.assert_allclose(metrics.f1, [0.5, 0.5])
        self.assertEqual(metrics.macro_f1, 0.5)
        self.assertEqual(metrics.accuracy, 0.5)
        np.testing.assert_array_equal(metrics.confusion, [[1, 1], [1, 1]])

    def test_absent_class_counts_as_zero(self):
        self.assertAlmostEqual(macro_f1([0, 1], [0, 1], 3), 2 / 3)

    def test_empty_input(self):
        with self.assertRaises(ParameterError):
            macro_f1([], [], 2)

    def test_report_is_plain_data(self):
        record = classification_metrics([0, 1], [0, 1], 2).to_dict()
        self.assertEqual(record['confusion'], [[1, 0], [0, 1]])
        self.assertNotIn('training_seconds', record)


class MajorityVoteTests(SimpleTestCase):
    """Tests for the neighbor vote and its tie rules."""

    def test_plurality(self):
        np.testing.assert_array_equal(majority_vote([[2, 1, 2]], [[1.0, 0.5, 3.0]], 3), [2])

    def test_tie_goes_to_smaller_summed_distance(self):
        np.testing.assert_array_equal(majority_vote([[0, 1, 0, 1]], [[1.0, 0.5, 2.0, 0.6]], 2), [1])

    def test_full_tie_goes_to_lower_class(self):
        np.testing.assert_array_equal(majority_vote([[1, 0]], [[1.0, 1.0]], 2), [0])

    @given(
        st.lists(st.tuples(st.integers(0, 3), st.integers(0, 100)), min_size=1, max_size=8),
        st.randoms(use_true_random=False),
    )
    @hypothesis_settings(max_examples=50, deadline=None)
    def test_vote_ignores_neighbor_order(self, votes, random):
        labels = np.array([[label for label, _ in votes]])
        distances = np.array([[float(dist) for _, dist in votes]])
        order = list(range(len(votes)))
        random.shuffle(order)
        np.testing.assert_array_equal(
            majority_vote(labels, distances, 4), majority_vote(labels[:, order], distances[:, order], 4)
        )


class PredictionTests(SimpleTestCase):
    """Tests for label inference."""

    def test_single_step_v2vs_uses_nearest_sample(self):
        reference = reference_set()
        model = build_model(small_config(kind='v2vs', k=1), 3, 3)
        x = np.random.default_rng(1).normal(size=(5, 3))
        vectors = run_forward(model, x).vectors()[:, 0]
        nearest = np.argmin(((vectors[:, None, :] - reference.features[None]) ** 2).sum(axis=-1), axis=1)
        np.testing.assert_array_equal(predict_labels(model, x, reference), reference.labels[nearest])

    def test_dirac_steps_predict_their_class(self):
        model = build_model(small_config(kind='v2ls'), 3, 3)
        model.W_y.data[...] = 0.0
        model.b_y.data[...] = [0.0, 0.0, 50.0]
        np.testing.assert_array_equal(predict_labels(model, np.ones((4, 3)), reference_set()), [2, 2, 2, 2])

    def test_temperature_keeps_argmax(self):
        outputs = []
        for tau in (0.85, 1.0):
            model = build_model(small_config(kind='v2ls', tau=tau), 3, 3)
            model.W_y.data[...] = 0.0
            model.b_y.data[...] = [1.0, 3.0, 2.0]
            outputs.append(predict_proba(model, np.ones((1, 3)), reference_set()))
        self.assertFalse(np.allclose(outputs[0], outputs[1]))
        self.assertEqual(np.argmax(outputs[0]), np.argmax(outputs[1]))

    def test_memory_draws_average(self):
        reference = reference_set()
        model = build_model(small_config(kind='mnknn'), 3, 3)
        x = np.random.default_rng(2).normal(size=(3, 3))
        one = predict_proba(model, x, reference, seed=1, memory_draws=1)
        again = predict_proba(model, x, reference, seed=1, memory_draws=1)
        three = predict_proba(model, x, reference, seed=1, memory_draws=3)
        np.testing.assert_array_equal(one, again)
        np.testing.assert_allclose(three.sum(axis=1), 1.0)

    def test_v2vs_empty_reference(self):
        model = build_model(small_config(kind='v2vs'), 3, 3)
        empty = Dataset(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), 3)
        with self.assertRaises(ParameterError):
            predict_labels(model, np.ones((1, 3)), empty)

    def test_checkpoint_round_trip_predicts_identically(self):
        reference = reference_set()
        config = small_config(kind='mnknn_vec')
        model = build_model(config, 3, 3)
        checkpoint = Checkpoint.from_model(model, config, reference.label_values)
        rebuilt = checkpoint.build_model()
        x = np.random.default_rng(3).normal(size=(6, 3))
        np.testing.assert_array_equal(predict_proba(model, x, reference), predict_proba(rebuilt, x, reference))
        self.assertEqual(predict_label(checkpoint, x[0], reference), predict_labels(model, x[:1], reference)[0])


class BaselineTests(SimpleTestCase):
    """Tests for the plain kNN classifiers."""

    def test_coincident_point(self):
        train = reference_set()
        test = train.subset(np.array([4, 9]))
        metrics = baseline_knn_classify(train, test, 1)
        self.assertEqual(metrics.accuracy, 1.0)

    def test_full_coverage_ooc_matches_full(self):
        train = two_gaussians(120, 3, seed=1)
        test = two_gaussians(40, 3, seed=2)
        full = baseline_knn_classify(train, test, 5)
        ooc = baseline_knn_classify(train, test, 5, mode='ooc', ooc=OocConfig(batch=120, rounds=1, full_coverage=True))
        np.testing.assert_array_equal(full.confusion, ooc.confusion)

    def test_unknown_mode(self):
        with self.assertRaises(ParameterError):
            baseline_knn_classify(reference_set(), reference_set(), 3, mode='lsh')


class SwapAblationTests(SimpleTestCase):
    """Tests for the neighbor-rank swap."""

    def targets(self):
        rng = np.random.default_rng(4)
        return NeighborTargets(
            rng.integers(0, 3, size=(6, 4)), rng.normal(size=(6, 4, 2)), np.sort(rng.random((6, 4)), axis=1),
            rng.integers(0, 6, size=(6, 4)),
        )

    def test_same_rank_is_identity(self):
        targets = self.targets()
        np.testing.assert_array_equal(swap_targets_ablation(targets, 2, 2).vectors, targets.vectors)

    def test_swap_is_an_involution(self):
        targets = self.targets()
        twice = swap_targets_ablation(swap_targets_ablation(targets, 1, 3), 1, 3)
        np.testing.assert_array_equal(twice.labels, targets.labels)
        np.testing.assert_array_equal(twice.distances, targets.distances)

    def test_swaps_every_field(self):
        targets = self.targets()
        swapped = swap_targets_ablation(targets, 1, 3)
        np.testing.assert_array_equal(swapped.labels[:, 0], targets.labels[:, 2])
        np.testing.assert_array_equal(swapped.vectors[:, 2], targets.vectors[:, 0])
        np.testing.assert_array_equal(swapped.indices[:, 1], targets.indices[:, 1])

    def test_rank_out_of_range(self):
        with self.assertRaises(ParameterError):
            swap_targets_ablation(self.targets(), 0, 2)
        with self.assertRaises(ParameterError):
            swap_targets_ablation(self.targets(), 1, 5)


class BatchingTests(SimpleTestCase):
    """Tests for the minibatch and validation-split helpers."""

    def test_trailing_single_row_is_merged(self):
        sizes = [len(b) for b in minibatches(np.arange(65), 32)]
        self.assertEqual(sizes, [32, 33])

    def test_split_is_disjoint_and_deterministic(self):
        train_rows, validation_rows = split_rows(50, 0.1, seed=3)
        self.assertEqual(len(validation_rows), 5)
        self.assertFalse(set(train_rows) & set(validation_rows))
        np.testing.assert_array_equal(split_rows(50, 0.1, seed=3)[1], validation_rows)
        self.assertEqual(len(split_rows(50, 0.0, seed=3)[1]), 0)


class TrainerTests(SimpleTestCase):
    """Tests for the training loops."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.data = two_gaussians(200, 4, seed=0)
        cls.targets = exact_neighbors(cls.data, 5)
        cls.small = two_gaussians(60, 3, seed=1)
        cls.small_targets = exact_neighbors(cls.small, 3)

    def test_zero_epochs_returns_initialization(self):
        config = small_config(epochs=0)
        checkpoint = Trainer(config).train(self.small, self.small_targets).checkpoint
        fresh = build_model(config, 3, 2).store.state()
        for name, values in fresh.items():
            np.testing.assert_array_equal(checkpoint.state[name], values)

    def test_same_seed_is_bit_identical(self):
        config = small_config(validation_fraction=0.2)
        a = Trainer(config).train(self.small, self.small_targets)
        b = Trainer(config).train(self.small, self.small_targets)
        self.assertEqual(a.losses, b.losses)
        for name in a.checkpoint.state:
            np.testing.assert_array_equal(a.checkpoint.state[name], b.checkpoint.state[name])

    def test_loss_decreases_over_first_epochs(self):
        config = TrainConfig.from_settings(kind='v2vsls', epochs=5, hidden=32, validation_fraction=0.0)
        result = Trainer(config).train(self.data, self.targets)
        losses = result.losses
        self.assertEqual(len(losses), 5)
        for earlier, later in zip(losses, losses[1:]):
            self.assertLess(later, earlier)

    def test_full_coverage_ooc_matches_full_training(self):
        k = 3
        config = small_config(validation_fraction=0.1, epochs=2)
        ooc_config = small_config(
            validation_fraction=0.1, epochs=2, mode='ooc', ooc=OocConfig(batch=60, rounds=1, full_coverage=True)
        )
        full = Trainer(config).train(self.small, exact_neighbors(self.small, k))
        ooc = Trainer(ooc_config).train_ooc(self.small)
        self.assertEqual(full.losses, ooc.losses)
        for name in full.checkpoint.state:
            np.testing.assert_array_equal(full.checkpoint.state[name], ooc.checkpoint.state[name])

    def test_minimal_ooc_configuration(self):
        config = small_config(mode='ooc', ooc=OocConfig(batch=4, rounds=1), epochs=1)
        result = Trainer(config).train_ooc(self.small)
        self.assertEqual(len(result.history), 1)

    def test_misaligned_targets(self):
        with self.assertRaises(DimensionError):
            Trainer(small_config()).train(self.small.subset(np.arange(30)), self.small_targets)

    def test_memory_networks_train(self):
        for kind in ('mnknn', 'mnknn_vec', 'memn2n'):
            result = Trainer(small_config(kind=kind, epochs=1)).train(self.small, self.small_targets)
            self.assertTrue(np.isfinite(result.losses[0]))
            model = result.checkpoint.build_model()
            predictions = predict_labels(model, self.small.features[:5], self.small)
            self.assertEqual(predictions.shape, (5,))

    def test_memory_larger_than_training_set(self):
        with self.assertRaises(ParameterError):
            Trainer(small_config(kind='mnknn', memory_size=64)).train(self.small, self.small_targets)

    def test_memory_checked_against_rows_left_after_validation(self):
        data = two_gaussians(70, 3, seed=2)
        config = TrainConfig.from_settings(kind='mnknn', epochs=1, hidden=8, embedding=8)
        with mock.patch.object(Trainer, '_run_epoch') as run_epoch:
            with self.assertRaisesMessage(ParameterError, 'outside the validation split'):
                Trainer(config).train(data, exact_neighbors(data, 5))
        run_epoch.assert_not_called()

    def test_training_memory_excludes_validation_rows(self):
        data = two_gaussians(80, 3, seed=2)
        config = TrainConfig.from_settings(kind='mnknn', epochs=1, hidden=8, embedding=8)
        train_rows, _ = split_rows(80, config.validation_fraction, config.seed)
        with mock.patch('training_eval.trainer.draw_memory', wraps=draw_memory) as drawn:
            result = Trainer(config).train(data, exact_neighbors(data, 5))
        self.assertIsNotNone(result.history[0].validation_f1)
        self.assertTrue(drawn.called)
        for call in drawn.call_args_list:
            np.testing.assert_array_equal(call.args[0], data.features[train_rows])

    def test_teacher_forcing_trains(self):
        result = Trainer(small_config(kind='v2ls', feed_mode='teacher_forced', epochs=1)).train(
            self.small, self.small_targets
        )
        self.assertTrue(np.isfinite(result.losses[0]))

    def test_early_stopping_bookkeeping(self):
        config = small_config(epochs=12, patience=2, validation_fraction=0.2)
        result = Trainer(config).train(self.small, self.small_targets)
        f1s = [record.validation_f1 for record in result.history]
        self.assertTrue(all(f is not None for f in f1s))
        self.assertEqual(result.best_epoch, int(np.argmax(f1s)))
        if result.stopped_early:
            self.assertEqual(len(result.history) - 1 - result.best_epoch, 2)


def mean_metric(runs):
    return float(np.mean(runs))


@unittest.skipUnless(settings.KNN_SLOW_TESTS, 'set KNN_SLOW_TESTS=True to run acceptance checks')
class TrainingAcceptanceTests(SimpleTestCase):
    """Paired multi-seed runs on synthetic data."""

    def test_swapped_ranks_do_not_help(self):
        original, swapped = [], []
        for seed in range(3):
            train = two_gaussians(600, 6, separation=2.0, seed=seed)
            test = two_gaussians(400, 6, separation=2.0, seed=100 + seed)
            targets = exact_neighbors(train, 5)
            config = TrainConfig.from_settings(kind='v2vsls', epochs=10, seed=seed)
            for bucket, used in ((original, targets), (swapped, swap_targets_ablation(targets, 1, 3))):
                model = Trainer(config).train(train, used).checkpoint.build_model()
                bucket.append(macro_f1(predict_labels(model, test.features, train), test.labels, 2))
        self.assertLessEqual(mean_metric(swapped), mean_metric(original))

    def test_ooc_training_close_to_full(self):
        full, ooc = [], []
        for seed in range(3):
            train = two_gaussians(600, 6, separation=2.0, seed=seed)
            test = two_gaussians(400, 6, separation=2.0, seed=100 + seed)
            config = TrainConfig.from_settings(kind='v2vsls', epochs=10, seed=seed)
            model = Trainer(config).train(train, exact_neighbors(train, 5)).checkpoint.build_model()
            full.append(macro_f1(predict_labels(model, test.features, train), test.labels, 2))
            ooc_config = TrainConfig.from_settings(kind='v2vsls', epochs=10, seed=seed, mode='ooc')
            model = Trainer(ooc_config).train_ooc(train).checkpoint.build_model()
            ooc.append(macro_f1(predict_labels(model, test.features, train), test.labels, 2))
        self.assertLess(abs(mean_metric(full) - mean_metric(ooc)), 0.05)


@unittest.skipUnless(
    settings.KNN_SLOW_TESTS and settings.KNN_CCD_PATH and Path(settings.KNN_CCD_PATH).exists(),
    'set KNN_SLOW_TESTS=True and KNN_CCD_PATH to the credit card default csv',
)
class CreditCardAcceptanceTests(SimpleTestCase):
    """Desk-scale runs on the credit card default dataset."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        from experiments.datasets import load_dataset, normalize_apply, normalize_fit, train_test_split

        data = load_dataset(settings.KNN_CCD_PATH, 'csv')
        train_rows, test_rows = train_test_split(data.size, 0.2, seed=0)
        stats = normalize_fit(data.subset(train_rows))
        cls.train = normalize_apply(stats, data.subset(train_rows))
        cls.test = normalize_apply(stats, data.subset(test_rows))

    def test_dimensions(self):
        self.assertEqual((self.train.size + self.test.size, self.train.dim, self.train.n_classes), (30000, 23, 2))

    def test_v2vsls_beats_full_knn(self):
        knn = baseline_knn_classify(self.train, self.test, 5).macro_f1
        scores = []
        targets = exact_neighbors(self.train, 5)
        for seed in range(3):
            config = TrainConfig.from_settings(kind='v2vsls', seed=seed)
            model = Trainer(config).train(self.train, targets).checkpoint.build_model()
            scores.append(macro_f1(predict_labels(model, self.test.features, self.train), self.test.labels, 2))
        self.assertGreaterEqual(mean_metric(scores) - knn, 0.02)

    def test_ooc_knn_is_worse_than_full(self):
        full = baseline_knn_classify(self.train, self.test, 5).macro_f1
        ooc = baseline_knn_classify(self.train, self.test, 5, mode='ooc', ooc=OocConfig(batch=64, rounds=1))
        self.assertLess(ooc.macro_f1, full)
