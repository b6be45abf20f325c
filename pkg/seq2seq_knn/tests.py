import math

import numpy as np
from django.test import SimpleTestCase

from diffcore.exceptions import DimensionError, ParameterError
from diffcore.gradcheck import check_gradients
from diffcore.tensor import Tensor
from seq2seq_knn.losses import loss_v2ls, loss_v2vs, loss_v2vsls, neighbor_label_term
from seq2seq_knn.models import PredictionBundle, Seq2SeqConfig, Seq2SeqKNN, average_steps


def build(kind='v2vsls', **overrides):
    options = dict(kind=kind, d=4, n_classes=3, k=2, hidden=5, dropout=0.0, seed=1)
    options.update(overrides)
    return Seq2SeqKNN(Seq2SeqConfig(**options))


def zero_parameters(model):
    for parameter in model.store:
        parameter.data[...] = 0.0


def bundle_of(label_steps=(), vector_steps=()):
    bundle = PredictionBundle(
        label_steps=[Tensor(np.atleast_2d(s)) for s in label_steps],
        vector_steps=[Tensor(np.atleast_2d(v)) for v in vector_steps],
    )
    if bundle.label_steps:
        bundle.label = average_steps(bundle.label_steps)
    return bundle


def fixture(seed=0, m=3, d=4, n_classes=3, k=2):
    rng = np.random.default_rng(seed)
    return (
        rng.uniform(-1.0, 1.0, size=(m, d)),
        rng.integers(0, n_classes, size=(m, k)),
        rng.uniform(-1.0, 1.0, size=(m, k, d)),
        rng.integers(0, n_classes, size=m),
    )


class Seq2SeqConfigTests(SimpleTestCase):
    """Tests for configuration validation."""

    def test_rejects_bad_values(self):
        with self.assertRaises(ParameterError):
            Seq2SeqConfig(kind='v2ls', d=2, n_classes=2, tau=0.0)
        with self.assertRaises(ParameterError):
            Seq2SeqConfig(kind='v2ls', d=2, n_classes=2, alpha=-1.0)
        with self.assertRaises(ParameterError):
            Seq2SeqConfig(kind='v2ls', d=2, n_classes=2, k=0)
        with self.assertRaises(ParameterError):
            Seq2SeqConfig(kind='mnknn', d=2, n_classes=2)
        with self.assertRaises(ParameterError):
            Seq2SeqConfig(kind='v2ls', d=2, n_classes=2, feed_mode='sampled')

    def test_round_trips_through_dict(self):
        config = Seq2SeqConfig(kind='v2vs', d=3, n_classes=4)
        self.assertEqual(Seq2SeqConfig(**config.to_dict()), config)


class EncodeDecodeTests(SimpleTestCase):
    """Tests for the encoder and single decoder steps."""

    def test_zero_weights_give_zero_state(self):
        model = build()
        zero_parameters(model)
        state = model.encode(np.ones(4))
        np.testing.assert_array_equal(state.encoder_h.data, np.zeros((1, 5)))
        np.testing.assert_array_equal(model.decode_step(np.zeros((1, 3)), state).data, np.zeros((1, 5)))

    def test_different_inputs_give_different_states(self):
        model = build(batch_norm=False)
        x = np.random.default_rng(2).uniform(-1.0, 1.0, size=(10, 4))
        states = model.encode(x).encoder_h.data
        self.assertEqual(len({tuple(np.round(row, 12)) for row in states}), 10)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionError):
            build().encode(np.ones(3))

    def test_more_than_k_steps_rejected(self):
        model = build(k=2)
        state = model.encode(np.ones(4))
        model.decode_step(np.zeros((1, 3)), state)
        model.decode_step(np.zeros((1, 3)), state)
        with self.assertRaises(ParameterError):
            model.decode_step(np.zeros((1, 3)), state)

    def test_encoder_gradient_through_label_head(self):
        model = build(kind='v2ls', batch_norm=False)
        x = np.random.default_rng(3).uniform(-1.0, 1.0, size=(2, 4))

        def loss():
            state = model.encode(x)
            y = model.decode_step(np.full((2, 3), 1.0 / 3), state)
            return (model.label_head(y) * np.array([1.0, -2.0, 0.5])).sum()

        errors = check_gradients(loss, [model.encoder.W_x, model.encoder.W_h, model.encoder.b])
        self.assertLess(max(errors.values()), 1e-4)


class HeadTests(SimpleTestCase):
    """Tests for the label and vector heads."""

    def test_zero_label_head_is_uniform(self):
        model = build()
        model.W_y.data[...] = 0.0
        model.b_y.data[...] = 0.0
        np.testing.assert_allclose(model.label_head(Tensor(np.ones((1, 5)))).data, [[1 / 3] * 3])

    def test_large_bias_is_near_dirac(self):
        model = build()
        model.W_y.data[...] = 0.0
        model.b_y.data[...] = [50.0, 0.0, 0.0]
        self.assertGreater(model.label_head(Tensor(np.ones((1, 5)))).data[0, 0], 1.0 - 1e-12)

    def test_lower_temperature_sharpens(self):
        sharp = build(tau=0.85)
        flat = build(tau=1.0)
        y = Tensor(np.random.default_rng(4).uniform(-1.0, 1.0, size=(1, 5)))
        self.assertGreater(sharp.label_head(y).data.max(), flat.label_head(y).data.max())

    def test_zero_vector_head(self):
        model = build()
        for p in (model.W_x1, model.b_x1, model.W_x2, model.b_x2):
            p.data[...] = 0.0
        np.testing.assert_array_equal(model.vector_head(Tensor(np.ones((1, 5)))).data, np.zeros((1, 4)))

    def test_identity_vector_head_clamps_negatives(self):
        model = build(hidden=4)
        model.W_x1.data[...] = np.eye(4)
        model.W_x2.data[...] = np.eye(4)
        model.b_x1.data[...] = 0.0
        model.b_x2.data[...] = 0.0
        out = model.vector_head(Tensor([[1.0, 2.0, 0.0, 3.0], [-1.0, 2.0, -3.0, 0.5]])).data
        np.testing.assert_array_equal(out, [[1.0, 2.0, 0.0, 3.0], [0.0, 2.0, 0.0, 0.5]])


class ForwardTests(SimpleTestCase):
    """Tests for complete forward passes."""

    def test_outputs_per_kind(self):
        x = np.ones((2, 4))
        self.assertFalse(build('v2ls').forward(x).has_vectors)
        self.assertFalse(build('v2vs').forward(x).has_labels)
        both = build('v2vsls').forward(x)
        self.assertTrue(both.has_labels and both.has_vectors)
        self.assertEqual(both.vectors().shape, (2, 2, 4))

    def test_final_distribution_is_mean_of_steps(self):
        bundle = build(k=5).forward(np.random.default_rng(5).normal(size=(3, 4)))
        self.assertEqual(len(bundle.label_steps), 5)
        np.testing.assert_allclose(bundle.probabilities(), bundle.step_probabilities().mean(axis=1), atol=1e-9)
        np.testing.assert_allclose(bundle.probabilities().sum(axis=1), 1.0, atol=1e-6)

    def test_single_step_distribution(self):
        bundle = build(k=1).forward(np.ones((1, 4)))
        np.testing.assert_allclose(bundle.probabilities(), bundle.label_steps[0].data)

    def test_zero_parameters(self):
        model = build()
        zero_parameters(model)
        bundle = model.forward(np.ones((2, 4)))
        np.testing.assert_allclose(bundle.probabilities(), np.full((2, 3), 1 / 3))
        np.testing.assert_array_equal(bundle.vectors(), np.zeros((2, 2, 4)))

    def test_predicted_feed_is_previous_distribution(self):
        model = build('v2ls')
        x = np.random.default_rng(6).normal(size=(1, 4))
        bundle = model.forward(x)
        state = model.encode(x)
        first = model.label_head(model.decode_step(model.start.data[None, :], state))
        second = model.label_head(model.decode_step(first.data, state))
        np.testing.assert_allclose(bundle.label_steps[1].data, second.data)

    def test_teacher_forced_feed_uses_target_labels(self):
        model = build('v2ls', feed_mode='teacher_forced')
        x = np.random.default_rng(7).normal(size=(2, 4))
        a = model.forward(x, training=True, target_labels=np.array([[0, 0], [0, 0]]))
        b = model.forward(x, training=True, target_labels=np.array([[2, 0], [2, 0]]))
        np.testing.assert_array_equal(a.label_steps[0].data, b.label_steps[0].data)
        self.assertFalse(np.allclose(a.label_steps[1].data, b.label_steps[1].data))

    def test_same_seed_same_model(self):
        x = np.ones((1, 4))
        np.testing.assert_array_equal(build(seed=9).forward(x).vectors(), build(seed=9).forward(x).vectors())


class LossTests(SimpleTestCase):
    """Tests for the seq2seq objectives."""

    def test_uniform_predictions_closed_form(self):
        bundle = bundle_of(label_steps=[[0.5, 0.5]] * 3)
        loss = loss_v2ls(bundle, np.array([[0, 1, 0]]), np.array([1]), alpha=9.5)
        self.assertAlmostEqual(loss.item(), 10.5 * math.log(2), places=12)

    def test_joint_dirac_is_zero(self):
        bundle = bundle_of(label_steps=[[0.0, 1.0]] * 2, vector_steps=[[1.0, 2.0], [3.0, 4.0]])
        targets = np.array([[1, 1]])
        vectors = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        self.assertEqual(loss_v2ls(bundle, targets, np.array([1]), alpha=9.5).item(), 0.0)
        self.assertEqual(loss_v2vsls(bundle, targets, vectors, np.array([1]), 9.5, 0.12).item(), 0.0)

    def test_alpha_zero_drops_ground_truth_term(self):
        bundle = bundle_of(label_steps=[[0.2, 0.8], [0.6, 0.4]])
        targets = np.array([[1, 0]])
        self.assertAlmostEqual(
            loss_v2ls(bundle, targets, np.array([0]), alpha=0.0).item(),
            neighbor_label_term(bundle, targets).item(),
        )

    def test_vector_loss_values(self):
        bundle = bundle_of(vector_steps=[[1.0, 0.0], [0.0, 1.0]])
        self.assertEqual(loss_v2vs(bundle, np.zeros((1, 2, 2))).item(), 2.0)

    def test_vector_loss_matches_scalar_loop(self):
        rng = np.random.default_rng(8)
        predicted = rng.normal(size=(3, 4, 2))
        targets = rng.normal(size=(3, 4, 2))
        bundle = bundle_of(vector_steps=[predicted[:, t] for t in range(4)])
        expected = 0.0
        for i in range(3):
            for t in range(4):
                for j in range(2):
                    expected += (predicted[i, t, j] - targets[i, t, j]) ** 2
        self.assertAlmostEqual(loss_v2vs(bundle, targets).item(), expected / 3, places=10)

    def test_combined_loss_recombines_parts(self):
        x, target_labels, target_vectors, labels = fixture(seed=9)
        bundle = build().forward(x)
        combined = loss_v2vsls(bundle, target_labels, target_vectors, labels, 9.5, 0.12).item()
        parts = loss_v2ls(bundle, target_labels, labels, 9.5).item() + 0.12 * loss_v2vs(bundle, target_vectors).item()
        self.assertAlmostEqual(combined, parts, places=10)
        self.assertAlmostEqual(
            loss_v2vsls(bundle, target_labels, target_vectors, labels, 9.5, 0.0).item(),
            loss_v2ls(bundle, target_labels, labels, 9.5).item(),
            places=12,
        )

    def test_step_permutation_changes_neighbor_term_only(self):
        steps = [[0.7, 0.3], [0.1, 0.9], [0.5, 0.5]]
        original = bundle_of(label_steps=steps)
        permuted = bundle_of(label_steps=[steps[2], steps[0], steps[1]])
        np.testing.assert_allclose(original.probabilities(), permuted.probabilities())
        targets = np.array([[0, 1, 1]])
        self.assertNotAlmostEqual(
            neighbor_label_term(original, targets).item(), neighbor_label_term(permuted, targets).item()
        )
        self.assertAlmostEqual(
            neighbor_label_term(original, targets).item(),
            neighbor_label_term(permuted, targets[:, [2, 0, 1]]).item(),
        )

    def test_missing_outputs_rejected(self):
        with self.assertRaises(ParameterError):
            loss_v2vs(bundle_of(label_steps=[[0.5, 0.5]]), np.zeros((1, 1, 2)))


class GradientTests(SimpleTestCase):
    """Full-loss gradients against central differences."""

    def check(self, model, tolerance):
        x, target_labels, target_vectors, labels = fixture(seed=10)
        errors = check_gradients(
            lambda: loss_v2vsls(model.forward(x, training=True), target_labels, target_vectors, labels, 9.5, 0.12),
            list(model.store),
        )
        self.assertLess(max(errors.values()), tolerance, errors)

    def test_v2vsls_without_batch_norm(self):
        self.check(build(batch_norm=False), 1e-4)

    def test_v2vsls_with_batch_norm(self):
        self.check(build(), 1e-3)

    def test_v2vs_projection_feed(self):
        model = build('v2vs', batch_norm=False)
        x, _, target_vectors, _ = fixture(seed=11)
        errors = check_gradients(lambda: loss_v2vs(model.forward(x), target_vectors), list(model.store))
        self.assertLess(max(errors.values()), 1e-4, errors)
