import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings as hypothesis_settings, strategies as st

from diffcore.exceptions import BatchSizeError, DimensionError, DistributionError, ParameterError
from diffcore.gradcheck import check_gradients
from diffcore.layers import BatchNorm, LSTMParameters, ParameterStore
from diffcore.ops import (
    activation, affine, batch_norm, dropout, einsum, kl_divergence, lstm_cell_step,
    softmax_with_temperature, squared_l2,
)
from diffcore.random import stream
from diffcore.tensor import ComputationRecord, Parameter, Tensor, backward, concat, stack


def random_parameter(name, shape, rng):
    """Parameter with entries uniform in [-1, 1]."""
    return Parameter(name, rng.uniform(-1.0, 1.0, size=shape))


class AffineTests(SimpleTestCase):
    """Tests for the affine map."""

    def test_identity_weight(self):
        out = affine(Tensor([1.0, 2.0]), Parameter('W', np.eye(2)), Parameter('b', np.zeros(2)))
        np.testing.assert_array_equal(out.data, [1.0, 2.0])

    def test_hand_matrix_multiply(self):
        W = Parameter('W', [[1.0, 1.0], [0.0, 1.0]])
        out = affine(Tensor([1.0, 2.0]), W, Parameter('b', [1.0, 0.0]))
        np.testing.assert_array_equal(out.data, [2.0, 3.0])

    def test_zero_input_returns_bias(self):
        W = Parameter('W', np.random.default_rng(0).normal(size=(2, 2)))
        out = affine(Tensor([0.0, 0.0]), W, Parameter('b', [3.0, -1.0]))
        np.testing.assert_array_equal(out.data, [3.0, -1.0])

    def test_shape_mismatch_names_both_shapes(self):
        with self.assertRaises(DimensionError) as ctx:
            affine(Tensor(np.ones((2, 3))), Parameter('W', np.ones((4, 2))))
        self.assertIn('(2, 3)', str(ctx.exception))
        self.assertIn('(4, 2)', str(ctx.exception))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        x = random_parameter('x', (3, 4), rng)
        W = random_parameter('W', (4, 2), rng)
        b = random_parameter('b', (2,), rng)
        errors = check_gradients(lambda: (affine(x, W, b) * affine(x, W, b)).sum(), [x, W, b])
        self.assertLess(max(errors.values()), 1e-4)


class ActivationTests(SimpleTestCase):
    """Tests for relu, tanh and sigmoid."""

    def test_known_values(self):
        np.testing.assert_array_equal(activation(Tensor([-1.0, 0.0, 2.0]), 'relu').data, [0.0, 0.0, 2.0])
        self.assertEqual(activation(Tensor([0.0]), 'tanh').data[0], 0.0)
        self.assertEqual(activation(Tensor([0.0]), 'sigmoid').data[0], 0.5)

    def test_relu_derivative_at_zero_is_zero(self):
        x = Parameter('x', [0.0, 1.0, -1.0])
        backward(activation(x, 'relu').sum())
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_unknown_kind(self):
        with self.assertRaises(ParameterError):
            activation(Tensor([1.0]), 'softplus')

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2)
        for kind in ('relu', 'tanh', 'sigmoid'):
            x = random_parameter('x', (5, 3), rng)
            errors = check_gradients(lambda: (activation(x, kind) * x).sum(), [x])
            self.assertLess(errors['x'], 1e-4, kind)


class SoftmaxTests(SimpleTestCase):
    """Tests for the temperature softmax."""

    def test_uniform_logits(self):
        np.testing.assert_allclose(softmax_with_temperature(Tensor([0.0, 0.0]), 1.0).data, [0.5, 0.5])

    def test_closed_form_at_default_temperature(self):
        p = softmax_with_temperature(Tensor([1.0, 0.0]), 0.85).data
        expected = math.exp(1 / 0.85) / (math.exp(1 / 0.85) + 1)
        self.assertAlmostEqual(p[0], expected, places=12)

    def test_rejects_non_positive_temperature(self):
        for tau in (0.0, -1.0):
            with self.assertRaises(ParameterError):
                softmax_with_temperature(Tensor([1.0, 2.0]), tau)

    def test_lower_temperature_is_more_peaked(self):
        z = Tensor([0.3, -0.2, 1.1])
        maxima = [softmax_with_temperature(z, tau).data.max() for tau in (2.0, 1.0, 0.85, 0.5)]
        self.assertTrue(all(a < b for a, b in zip(maxima, maxima[1:])))

    @hypothesis_settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(-50, 50), min_size=2, max_size=8),
        st.floats(-100, 100),
        st.floats(0.05, 5.0),
    )
    def test_sums_to_one_and_is_shift_invariant(self, logits, shift, tau):
        base = softmax_with_temperature(Tensor(logits), tau).data
        shifted = softmax_with_temperature(Tensor(np.array(logits) + shift), tau).data
        self.assertAlmostEqual(base.sum(), 1.0, delta=1e-9)
        np.testing.assert_allclose(base, shifted, atol=1e-9)

    def test_constant_logits_are_uniform(self):
        np.testing.assert_allclose(softmax_with_temperature(Tensor([7.0, 7.0, 7.0]), 0.3).data, [1 / 3] * 3)


class KLDivergenceTests(SimpleTestCase):
    """Tests for the KL divergence loss."""

    def test_identical_distributions(self):
        self.assertEqual(kl_divergence([0.3, 0.7], Tensor([0.3, 0.7])).item(), 0.0)

    def test_one_hot_against_uniform(self):
        self.assertAlmostEqual(kl_divergence([1.0, 0.0], Tensor([0.5, 0.5])).item(), math.log(2), places=12)

    def test_two_term_closed_form(self):
        value = kl_divergence([0.5, 0.5], Tensor([0.25, 0.75])).item()
        self.assertAlmostEqual(value, 0.5 * math.log(2) + 0.5 * math.log(2 / 3), places=12)

    def test_rejects_non_distributions(self):
        with self.assertRaises(DistributionError):
            kl_divergence([0.5, 0.6], Tensor([0.5, 0.5]))
        with self.assertRaises(DistributionError):
            kl_divergence([1.0, 0.0], Tensor([-0.5, 1.5]))

    @hypothesis_settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
    def test_non_negative(self, a, b):
        p = softmax_with_temperature(Tensor(a)).data
        q = softmax_with_temperature(Tensor(b))
        self.assertGreaterEqual(kl_divergence(p, q).item(), -1e-12)

    def test_softmax_cross_entropy_gradient(self):
        tau = 0.85
        z = Parameter('z', [0.2, -0.4, 0.9])
        target = np.array([0.0, 1.0, 0.0])
        p = softmax_with_temperature(z, tau)
        backward(kl_divergence(target, p))
        np.testing.assert_allclose(z.grad, (p.data - target) / tau, atol=1e-12)


class SquaredL2Tests(SimpleTestCase):
    """Tests for the squared Euclidean loss."""

    def test_values(self):
        self.assertEqual(squared_l2(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item(), 0.0)
        self.assertEqual(squared_l2(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item(), 2.0)
        self.assertEqual(squared_l2(Tensor([3.0, 4.0]), Tensor([0.0, 0.0])).item(), 25.0)

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            squared_l2(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))

    def test_gradient_of_square(self):
        w = Parameter('w', [3.0])
        backward(squared_l2(w, Tensor([0.0])))
        np.testing.assert_array_equal(w.grad, [6.0])


class LSTMCellTests(SimpleTestCase):
    """Tests for one LSTM step."""

    def setUp(self):
        self.store = ParameterStore()
        self.params = LSTMParameters.create(self.store, 'lstm', 3, 4, np.random.default_rng(3))

    def zero_parameters(self):
        for parameter in self.store:
            parameter.data[...] = 0.0

    def test_zero_parameters_give_zero_hidden_state(self):
        self.zero_parameters()
        h, c = lstm_cell_step(Tensor(np.ones(3)), Tensor(np.zeros(4)), Tensor(np.zeros(4)), self.params)
        np.testing.assert_array_equal(h.data, np.zeros(4))
        for _ in range(3):
            h, c = lstm_cell_step(Tensor(np.zeros(3)), h, c, self.params)
        np.testing.assert_array_equal(h.data, np.zeros(4))
        np.testing.assert_array_equal(c.data, np.zeros(4))

    def test_closed_forget_gate_keeps_only_new_content(self):
        self.params.b.data[4:8] = -50.0
        x = np.array([0.3, -0.1, 0.5])
        c_prev = np.full(4, 2.0)
        h, c = lstm_cell_step(Tensor(x), Tensor(np.zeros(4)), Tensor(c_prev), self.params)
        gates = x @ self.params.W_x.data + self.params.b.data
        i = 1 / (1 + np.exp(-gates[0:4]))
        g = np.tanh(gates[8:12])
        np.testing.assert_allclose(c.data, i * g, atol=1e-12)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionError):
            lstm_cell_step(Tensor(np.ones(2)), Tensor(np.zeros(4)), Tensor(np.zeros(4)), self.params)

    def test_composite_graph_gradient(self):
        rng = np.random.default_rng(4)
        W = random_parameter('head.W', (4, 3), rng)
        b = random_parameter('head.b', (3,), rng)
        x = Tensor(rng.uniform(-1, 1, size=(2, 3)))
        targets = np.eye(3)[[0, 2]]

        def loss():
            h, c = lstm_cell_step(x, Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 4))), self.params)
            h, _ = lstm_cell_step(x, h, c, self.params)
            return kl_divergence(targets, softmax_with_temperature(affine(h, W, b), 0.85)).mean()

        errors = check_gradients(loss, [*self.store, W, b])
        self.assertLess(max(errors.values()), 1e-4)


class DropoutTests(SimpleTestCase):
    """Tests for inverted dropout."""

    def test_zero_rate_and_eval_mode_are_identity(self):
        x = Tensor(np.arange(6.0))
        self.assertIs(dropout(x, 0.0, True, stream(0, 'test')), x)
        self.assertIs(dropout(x, 0.2, False), x)

    def test_expectation_is_preserved(self):
        x = np.linspace(0.5, 2.0, 8)
        rng = stream(7, 'dropout-mc')
        total = np.zeros_like(x)
        for _ in range(10000):
            total += dropout(Tensor(x), 0.5, True, rng).data
        ratio = total / 10000 / x
        self.assertLess(abs(ratio.mean() - 1.0), 0.02)
        np.testing.assert_allclose(ratio, 1.0, atol=0.05)

    def test_rate_out_of_range(self):
        for rate in (-0.1, 1.0):
            with self.assertRaises(ParameterError):
                dropout(Tensor([1.0]), rate, True, stream(0, 'test'))


class BatchNormTests(SimpleTestCase):
    """Tests for batch normalization."""

    def setUp(self):
        self.store = ParameterStore()
        self.bn = BatchNorm(self.store, 'bn', 2)

    def test_constant_column_normalizes_to_zero(self):
        out = self.bn(Tensor([[4.0, -1.0], [4.0, 1.0]]), training=True)
        np.testing.assert_array_equal(out.data[:, 0], [0.0, 0.0])
        np.testing.assert_allclose(out.data[:, 1], [-1.0, 1.0], atol=1e-4)

    def test_zero_scale_gives_shift(self):
        self.bn.gamma.data[...] = 0.0
        self.bn.beta.data[...] = [2.5, -3.0]
        out = self.bn(Tensor([[1.0, 2.0], [3.0, 5.0], [0.0, 1.0]]), training=True)
        np.testing.assert_array_equal(out.data, [[2.5, -3.0]] * 3)

    def test_single_row_in_training_mode(self):
        with self.assertRaises(BatchSizeError):
            self.bn(Tensor([[1.0, 2.0]]), training=True)

    def test_running_statistics_update_and_eval_mode(self):
        self.bn(Tensor([[0.0, 0.0], [2.0, 4.0]]), training=True)
        np.testing.assert_allclose(self.bn.running_mean, [0.1, 0.2])
        np.testing.assert_allclose(self.bn.running_var, [0.9 + 0.1 * 2.0, 0.9 + 0.1 * 8.0])
        out = self.bn(Tensor([[0.1, 0.2]]), training=False)
        np.testing.assert_allclose(out.data, [[0.0, 0.0]], atol=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(5)
        x = random_parameter('x', (4, 2), rng)
        weights = rng.uniform(-1, 1, size=(4, 2))

        def loss():
            return (activation(batch_norm(x, self.bn.gamma, self.bn.beta, self.bn.running_mean,
                                          self.bn.running_var, True), 'tanh') * weights).sum()

        errors = check_gradients(loss, [x, self.bn.gamma, self.bn.beta])
        self.assertLess(max(errors.values()), 1e-3)


class BackwardTests(SimpleTestCase):
    """Tests for the computation record and reverse pass."""

    def test_non_scalar_loss(self):
        with self.assertRaises(DimensionError):
            backward(Parameter('w', [1.0, 2.0]) * 2.0)

    def test_record_is_topological_and_visits_once(self):
        w = Parameter('w', [1.0, -2.0])
        shared = activation(w, 'tanh')
        loss = (shared * shared + shared).sum()
        record = ComputationRecord.trace(loss)
        position = {id(node): i for i, node in enumerate(record)}
        self.assertEqual(len(position), len(record))
        for node in record:
            for parent in node._parents:
                if parent.requires_grad:
                    self.assertLess(position[id(parent)], position[id(node)])

    def test_shared_subexpression_accumulates(self):
        w = Parameter('w', [0.5])
        t = activation(w, 'tanh')
        backward((t * t + t).sum())
        value = math.tanh(0.5)
        self.assertAlmostEqual(w.grad[0], (2 * value + 1) * (1 - value ** 2), places=12)

    def test_concat_stack_and_einsum_gradients(self):
        rng = np.random.default_rng(6)
        a = random_parameter('a', (2, 3), rng)
        m = random_parameter('m', (2, 4, 3), rng)

        def loss():
            scores = einsum('be,bne->bn', a, m)
            read = einsum('bn,bne->be', softmax_with_temperature(scores), m)
            joined = concat([read, a], axis=-1)
            return (stack([joined, joined * joined]).sum() * 0.5)

        errors = check_gradients(loss, [a, m])
        self.assertLess(max(errors.values()), 1e-4)


class ParameterStoreTests(SimpleTestCase):
    """Tests for parameter registration and state round-trips."""

    def test_duplicate_names_rejected(self):
        store = ParameterStore()
        store.create('W', np.zeros((2, 2)))
        with self.assertRaises(ParameterError):
            store.create('W', np.zeros((2, 2)))

    def test_load_state_checks_shapes(self):
        store = ParameterStore()
        store.create('W', np.zeros((2, 2)))
        with self.assertRaises(DimensionError):
            store.load_state({'W': np.zeros((3, 2))})

    def test_state_round_trip(self):
        store = ParameterStore()
        BatchNorm(store, 'bn', 3)
        store['bn.gamma'].data[...] = [1.0, 2.0, 3.0]
        state = store.state()
        store['bn.gamma'].data[...] = 0.0
        store.load_state(state)
        np.testing.assert_array_equal(store['bn.gamma'].data, [1.0, 2.0, 3.0])


class RandomStreamTests(SimpleTestCase):
    """Tests for seeded streams."""

    def test_same_key_same_numbers(self):
        np.testing.assert_array_equal(stream(3, 'ooc', 1, 9).random(5), stream(3, 'ooc', 1, 9).random(5))

    def test_different_keys_differ(self):
        self.assertFalse(np.array_equal(stream(3, 'ooc', 1, 9).random(5), stream(3, 'ooc', 1, 10).random(5)))
        self.assertFalse(np.array_equal(stream(3, 'ooc').random(5), stream(3, 'shuffle').random(5)))

    def test_negative_seed_rejected(self):
        with self.assertRaises(ParameterError):
            stream(-1, 'ooc')
