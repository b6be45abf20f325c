"""
Memory-network models that mimic a K nearest neighbor search.

Each of the K hops attends over n memory slots (random training samples)
and emits a label distribution; mnknn_vec also emits a feature vector per
hop. The memory embeddings are shared by all hops. memn2n is the plain
end-to-end memory network with one label head after the last hop.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from diffcore.exceptions import DimensionError, ParameterError
from diffcore.layers import BatchNorm, ParameterStore, uniform_init
from diffcore.ops import activation, affine, dropout, einsum, softmax_with_temperature
from diffcore.random import stream
from diffcore.tensor import Tensor, as_tensor
from seq2seq_knn.models import PredictionBundle, average_steps

logger = logging.getLogger(__name__)


MEMNET_KINDS = ('mnknn', 'mnknn_vec', 'memn2n')
MEMORY_TAG = 'memory'
MEMORY_EVAL_TAG = 'memory-eval'


@dataclass
class MemNetConfig:
    """Hyperparameters of one memory network; K is also the hop count."""

    kind: str
    d: int
    n_classes: int
    k: int = 5
    memory_size: int = 64
    embedding: int = 64
    tau: float = 0.85
    alpha: float = 9.5
    lam: float = 0.12
    dropout: float = 0.2
    batch_norm: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MEMNET_KINDS:
            raise ParameterError(f"unknown memory network kind '{self.kind}', expected one of {MEMNET_KINDS}")
        if self.memory_size < 1 or self.embedding < 1:
            raise ParameterError(
                f"memory size and embedding must be positive, got {self.memory_size} and {self.embedding}"
            )
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.alpha < 0 or self.lam < 0:
            raise ParameterError(f"alpha and lambda must be non-negative, got {self.alpha} and {self.lam}")
        if self.k < 1 or self.d < 1:
            raise ParameterError(f"K and d must be positive, got {self.k} and {self.d}")
        if self.n_classes < 2:
            raise ParameterError(f"at least 2 classes are required, got {self.n_classes}")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout rate must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MemoryBatch:
    """n memory vectors per query: features [m x n x d] and their source rows [m x n]."""

    features: np.ndarray
    indices: np.ndarray

    @property
    def size(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> 'MemoryBatch':
        return MemoryBatch(self.features[rows], self.indices[rows])


def draw_memory(
    features: np.ndarray,
    size: int,
    keys: np.ndarray,
    seed: int,
    tag: str = MEMORY_TAG,
    epoch: int = 0,
    exclude: Optional[np.ndarray] = None
) -> MemoryBatch:
    """
    Draw ``size`` distinct training rows for each query.

    Query j uses ``stream(seed, tag, epoch, keys[j])``; when ``exclude`` is
    given, row ``exclude[j]`` is never drawn for query j.

    Raises:
        ParameterError: If fewer than ``size`` rows are available
    """
    n = features.shape[0]
    available = n - (0 if exclude is None else 1)
    if size > available:
        raise ParameterError(f"memory of {size} slots needs {size} training rows, only {available} available")
    keys = np.asarray(keys, dtype=np.int64)
    indices = np.empty((len(keys), size), dtype=np.int64)
    for j, key in enumerate(keys):
        rng = stream(seed, tag, epoch, int(key))
        drawn = rng.choice(available, size=size, replace=False)
        if exclude is not None:
            drawn = drawn + (drawn >= exclude[j])
        indices[j] = drawn
    return MemoryBatch(features=features[indices], indices=indices)


@dataclass
class MemNetState:
    """Controller states u^1..u^{K+1}, attention p^t and memory reads o^t of every hop."""

    controls: List[Tensor] = field(default_factory=list)
    attention: List[Tensor] = field(default_factory=list)
    reads: List[Tensor] = field(default_factory=list)


class MemNetKNN:
    """MNkNN, MNkNN_VEC and the plain MemN2N reference."""

    def __init__(self, config: MemNetConfig):
        self.config = config
        self.kind = config.kind
        self.store = ParameterStore()
        rng = stream(config.seed, 'init')
        d, C, e = config.d, config.n_classes, config.embedding

        self.A = self.store.create('memory.A', uniform_init(rng, (d, e), d))
        self.C_emb = self.store.create('memory.C', uniform_init(rng, (d, e), d))
        self.B_emb = self.store.create('query.B', uniform_init(rng, (d, e), d))
        self.H = self.store.create('hop.H', uniform_init(rng, (e, e), e))
        self.query_norm = BatchNorm(self.store, 'query_norm', e) if config.batch_norm else None
        self.W_y = self.store.create('label_head.W', uniform_init(rng, (e, C), e))
        self.b_y = self.store.create('label_head.b', uniform_init(rng, (C,), e))
        if self.predicts_vectors:
            self.T = self.store.create('vector_head.T', uniform_init(rng, (e, e), e))
            self.W_x = self.store.create('vector_head.W', uniform_init(rng, (e, d), e))
            self.b_x = self.store.create('vector_head.b', uniform_init(rng, (d,), e))

        logger.debug(f"Built {self.kind} with {len(self.store)} parameter tensors")

    @property
    def predicts_labels(self) -> bool:
        return True

    @property
    def predicts_vectors(self) -> bool:
        return self.kind == 'mnknn_vec'

    @property
    def label_temperature(self) -> float:
        return 1.0 if self.kind == 'memn2n' else self.config.tau

    def embed_memory(self, memory: MemoryBatch) -> Tuple[Tensor, Tensor]:
        """Input and output memory embeddings m_i = x_i A, c_i = x_i C, each [m x n x e]."""
        features = np.asarray(memory.features, dtype=np.float64)
        if features.ndim != 3 or features.shape[2] != self.config.d:
            raise DimensionError(f"memory shape {features.shape} does not match feature size {self.config.d}")
        return affine(features, self.A), affine(features, self.C_emb)

    def embed_query(self, x, training: bool = False) -> Tensor:
        x = as_tensor(np.atleast_2d(x.data if isinstance(x, Tensor) else x))
        if x.shape[-1] != self.config.d:
            raise DimensionError(f"input has {x.shape[-1]} features, model expects {self.config.d}")
        u = affine(x, self.B_emb)
        if self.query_norm is not None:
            u = self.query_norm(u, training)
        return u

    def hop(self, u: Tensor, m: Tensor, c: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        """
        One attention hop.

        Returns:
            Tuple of (u_next = u H + o, o, p) with p the attention over the n slots
        """
        p = softmax_with_temperature(einsum('be,bne->bn', u, m), 1.0)
        o = einsum('bn,bne->be', p, c)
        return affine(u, self.H) + o, o, p

    def label_head_hop(self, z) -> Tensor:
        return softmax_with_temperature(affine(z, self.W_y, self.b_y), self.label_temperature)

    def vector_head_hop(self, z) -> Tensor:
        return affine(activation(affine(z, self.T), 'relu'), self.W_x, self.b_x)

    def forward_with_state(
        self,
        x,
        memory: MemoryBatch,
        training: bool = False,
        rng: Optional[np.random.Generator] = None
    ) -> Tuple[PredictionBundle, MemNetState]:
        u = self.embed_query(x, training)
        if memory.features.shape[0] != u.shape[0]:
            raise DimensionError(f"{memory.features.shape[0]} memory batches given for {u.shape[0]} queries")
        m, c = self.embed_memory(memory)
        state = MemNetState(controls=[u])
        bundle = PredictionBundle()

        for t in range(self.config.k):
            u, o, p = self.hop(u, m, c)
            state.controls.append(u)
            state.reads.append(o)
            state.attention.append(p)
            if self.kind == 'memn2n' and t < self.config.k - 1:
                continue
            z = dropout(u, self.config.dropout, training, rng)
            bundle.label_steps.append(self.label_head_hop(z))
            if self.predicts_vectors:
                bundle.vector_steps.append(self.vector_head_hop(z))

        bundle.label = average_steps(bundle.label_steps)
        return bundle, state

    def forward(
        self,
        x,
        memory: MemoryBatch,
        training: bool = False,
        rng: Optional[np.random.Generator] = None
    ) -> PredictionBundle:
        return self.forward_with_state(x, memory, training, rng)[0]
