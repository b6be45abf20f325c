"""
Objectives of the memory-network models.

The per-hop label loss has the same form as the seq2seq label loss, so the
terms are shared.
"""
from diffcore.tensor import Tensor
from seq2seq_knn.losses import ground_truth_term, loss_v2ls, loss_v2vsls
from seq2seq_knn.models import PredictionBundle


def loss_mnknn(bundle: PredictionBundle, target_labels, labels, alpha: float) -> Tensor:
    return loss_v2ls(bundle, target_labels, labels, alpha)


def loss_mnknn_vec(bundle: PredictionBundle, target_labels, target_vectors, labels, alpha: float, lam: float) -> Tensor:
    return loss_v2vsls(bundle, target_labels, target_vectors, labels, alpha, lam)


def loss_memn2n(bundle: PredictionBundle, labels) -> Tensor:
    """Plain classification loss KL(onehot(Y^GT) || Y^P)."""
    return ground_truth_term(bundle, labels).mean()
