import math

import numpy as np
from django.test import SimpleTestCase

from diffcore.exceptions import DimensionError, ParameterError
from diffcore.gradcheck import check_gradients
from diffcore.tensor import Tensor
from memnet_knn.losses import loss_memn2n, loss_mnknn, loss_mnknn_vec
from memnet_knn.models import MemNetConfig, MemNetKNN, MemoryBatch, draw_memory
from seq2seq_knn.losses import loss_v2ls


def build(kind='mnknn_vec', **overrides):
    options = dict(kind=kind, d=3, n_classes=3, k=2, memory_size=4, embedding=6, dropout=0.0, seed=2)
    options.update(overrides)
    return MemNetKNN(MemNetConfig(**options))


def random_memory(m=3, n=4, d=3, seed=0):
    rng = np.random.default_rng(seed)
    return MemoryBatch(rng.uniform(-1.0, 1.0, size=(m, n, d)), np.tile(np.arange(n), (m, 1)))


class DrawMemoryTests(SimpleTestCase):
    """Tests for memory sampling."""

    def test_distinct_rows_without_self(self):
        features = np.arange(40.0).reshape(20, 2)
        memory = draw_memory(features, 19, keys=np.arange(20), seed=1, exclude=np.arange(20))
        for j in range(20):
            self.assertNotIn(j, memory.indices[j])
            self.assertEqual(len(set(memory.indices[j])), 19)
        np.testing.assert_array_equal(memory.features, features[memory.indices])

    def test_deterministic_per_key(self):
        features = np.random.default_rng(0).normal(size=(50, 2))
        a = draw_memory(features, 5, keys=np.array([3, 9]), seed=4, epoch=1)
        b = draw_memory(features, 5, keys=np.array([9]), seed=4, epoch=1)
        np.testing.assert_array_equal(a.indices[1], b.indices[0])

    def test_too_many_slots(self):
        with self.assertRaises(ParameterError):
            draw_memory(np.zeros((4, 2)), 4, keys=np.arange(4), seed=0, exclude=np.arange(4))


class EmbeddingAndHopTests(SimpleTestCase):
    """Tests for memory embedding and a single hop."""

    def test_zero_input_embedding_gives_uniform_attention(self):
        model = build()
        model.A.data[...] = 0.0
        m, c = model.embed_memory(random_memory())
        np.testing.assert_array_equal(m.data, 0.0)
        _, _, p = model.hop(model.embed_query(np.ones((3, 3))), m, c)
        np.testing.assert_allclose(p.data, 0.25)

    def test_identity_embedding(self):
        model = build(embedding=3)
        model.A.data[...] = np.eye(3)
        memory = random_memory()
        m, _ = model.embed_memory(memory)
        np.testing.assert_allclose(m.data, memory.features)

    def test_single_slot_attention(self):
        model = build(memory_size=1)
        memory = random_memory(n=1)
        _, state = model.forward_with_state(np.ones((3, 3)), memory)
        for p in state.attention:
            np.testing.assert_allclose(p.data, 1.0)

    def test_equal_slots_read_the_mean(self):
        model = build()
        u = Tensor(np.random.default_rng(1).normal(size=(1, 6)))
        m = Tensor(np.ones((1, 4, 6)))
        c = Tensor(np.random.default_rng(2).normal(size=(1, 4, 6)))
        _, o, p = model.hop(u, m, c)
        np.testing.assert_allclose(p.data, 0.25)
        np.testing.assert_allclose(o.data, c.data.mean(axis=1))

    def test_zero_h_passes_the_read(self):
        model = build()
        model.H.data[...] = 0.0
        u = Tensor(np.ones((1, 6)))
        m = Tensor(np.random.default_rng(3).normal(size=(1, 4, 6)))
        c = Tensor(np.random.default_rng(4).normal(size=(1, 4, 6)))
        u_next, o, _ = model.hop(u, m, c)
        np.testing.assert_array_equal(u_next.data, o.data)

    def test_two_slot_attention_by_hand(self):
        model = build(embedding=2)
        u = Tensor([[1.0, 0.0]])
        m = Tensor([[[1.0, 0.0], [0.0, 1.0]]])
        c = Tensor([[[2.0, 0.0], [0.0, 4.0]]])
        _, o, p = model.hop(u, m, c)
        e = math.e
        np.testing.assert_allclose(p.data, [[e / (e + 1), 1 / (e + 1)]])
        np.testing.assert_allclose(o.data, [[2 * e / (e + 1), 4 / (e + 1)]])


class HeadTests(SimpleTestCase):
    """Tests for the per-hop heads."""

    def test_zero_label_head_is_uniform(self):
        model = build()
        model.W_y.data[...] = 0.0
        model.b_y.data[...] = 0.0
        bundle = model.forward(np.ones((3, 3)), random_memory())
        np.testing.assert_allclose(bundle.probabilities(), 1 / 3)

    def test_label_head_closed_form(self):
        model = build(embedding=2, n_classes=2, tau=0.85)
        model.W_y.data[...] = np.eye(2)
        model.b_y.data[...] = 0.0
        out = model.label_head_hop(Tensor([[1.0, 0.0]])).data
        expected = math.exp(1 / 0.85) / (math.exp(1 / 0.85) + 1)
        self.assertAlmostEqual(out[0, 0], expected, places=12)

    def test_zero_vector_head(self):
        model = build()
        for p in (model.T, model.W_x, model.b_x):
            p.data[...] = 0.0
        np.testing.assert_array_equal(model.vector_head_hop(Tensor(np.ones((1, 6)))).data, 0.0)

    def test_identity_vector_head_clamps_negatives(self):
        model = build(embedding=3)
        model.T.data[...] = np.eye(3)
        model.W_x.data[...] = np.eye(3)
        model.b_x.data[...] = 0.0
        out = model.vector_head_hop(Tensor([[1.0, -2.0, 3.0]])).data
        np.testing.assert_array_equal(out, [[1.0, 0.0, 3.0]])


class ForwardTests(SimpleTestCase):
    """Tests for complete forward passes."""

    def test_hops_and_heads(self):
        model = build(k=5)
        bundle, state = model.forward_with_state(np.ones((3, 3)), random_memory())
        self.assertEqual(len(bundle.label_steps), 5)
        self.assertEqual(len(bundle.vector_steps), 5)
        self.assertEqual(len(state.controls), 6)
        np.testing.assert_allclose(bundle.probabilities(), bundle.step_probabilities().mean(axis=1), atol=1e-9)
        for p in state.attention:
            np.testing.assert_allclose(p.data.sum(axis=1), 1.0, atol=1e-9)
            self.assertTrue(np.all(p.data >= 0))

    def test_single_hop(self):
        bundle = build(k=1).forward(np.ones((3, 3)), random_memory())
        np.testing.assert_allclose(bundle.probabilities(), bundle.label_steps[0].data)

    def test_mnknn_has_no_vectors(self):
        model = build('mnknn')
        self.assertFalse(model.forward(np.ones((3, 3)), random_memory()).has_vectors)
        self.assertNotIn('vector_head.T', model.store.names())

    def test_memn2n_has_one_head(self):
        bundle = build('memn2n', k=3).forward(np.ones((3, 3)), random_memory())
        self.assertEqual(len(bundle.label_steps), 1)

    def test_embeddings_shared_across_hops(self):
        names = build(k=5).store.names()
        self.assertEqual(names.count('memory.A'), 1)
        self.assertEqual(names.count('memory.C'), 1)
        self.assertEqual(len(build(k=1).store), len(build(k=5).store))

    def test_memory_permutation_equivariance(self):
        model = build()
        memory = random_memory(seed=5)
        perm = np.array([2, 0, 3, 1])
        shuffled = MemoryBatch(memory.features[:, perm], memory.indices[:, perm])
        x = np.random.default_rng(6).normal(size=(3, 3))
        a, sa = model.forward_with_state(x, memory)
        b, sb = model.forward_with_state(x, shuffled)
        for pa, pb in zip(sa.attention, sb.attention):
            np.testing.assert_allclose(pb.data, pa.data[:, perm], atol=1e-12)
        for oa, ob in zip(sa.reads, sb.reads):
            np.testing.assert_allclose(ob.data, oa.data, atol=1e-12)
        np.testing.assert_allclose(b.step_probabilities(), a.step_probabilities(), atol=1e-12)

    def test_memory_batch_count_must_match(self):
        with self.assertRaises(DimensionError):
            build().forward(np.ones((2, 3)), random_memory(m=3))


class LossAndGradientTests(SimpleTestCase):
    """Objectives and their gradients."""

    def fixture(self, seed=7):
        rng = np.random.default_rng(seed)
        return (
            rng.uniform(-1.0, 1.0, size=(3, 3)),
            rng.integers(0, 3, size=(3, 2)),
            rng.uniform(-1.0, 1.0, size=(3, 2, 3)),
            rng.integers(0, 3, size=3),
        )

    def test_lambda_zero_reduces_to_label_loss(self):
        x, target_labels, target_vectors, labels = self.fixture()
        bundle = build().forward(x, random_memory())
        self.assertAlmostEqual(
            loss_mnknn_vec(bundle, target_labels, target_vectors, labels, 9.5, 0.0).item(),
            loss_mnknn(bundle, target_labels, labels, 9.5).item(),
            places=12,
        )
        self.assertEqual(
            loss_mnknn(bundle, target_labels, labels, 9.5).item(),
            loss_v2ls(bundle, target_labels, labels, 9.5).item(),
        )

    def test_memn2n_loss_is_ground_truth_only(self):
        bundle = build('memn2n').forward(np.ones((3, 3)), random_memory())
        labels = np.array([0, 1, 2])
        expected = -np.log(bundle.probabilities()[np.arange(3), labels]).mean()
        self.assertAlmostEqual(loss_memn2n(bundle, labels).item(), expected, places=12)

    def test_mnknn_vec_gradients(self):
        model = build(batch_norm=False)
        memory = random_memory(seed=8)
        x, target_labels, target_vectors, labels = self.fixture()
        errors = check_gradients(
            lambda: loss_mnknn_vec(model.forward(x, memory), target_labels, target_vectors, labels, 9.5, 0.12),
            list(model.store),
        )
        self.assertLess(max(errors.values()), 1e-4, errors)

    def test_gradients_through_batch_norm(self):
        model = build()
        memory = random_memory(seed=9)
        x, target_labels, target_vectors, labels = self.fixture(seed=10)
        errors = check_gradients(
            lambda: loss_mnknn_vec(
                model.forward(x, memory, training=True), target_labels, target_vectors, labels, 9.5, 0.12
            ),
            list(model.store),
        )
        self.assertLess(max(errors.values()), 1e-3, errors)
