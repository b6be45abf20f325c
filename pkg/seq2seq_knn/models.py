"""
Encoder-decoder models that mimic a K nearest neighbor search.

The encoder reads the input vector as a sequence of length one; the decoder
then runs exactly K steps, each emitting a label distribution (v2ls), an
out-of-sample feature vector (v2vs) or both (v2vsls).
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from diffcore.exceptions import DimensionError, ParameterError
from diffcore.layers import BatchNorm, LSTMParameters, ParameterStore, uniform_init
from diffcore.ops import activation, affine, dropout, lstm_cell_step, softmax_with_temperature
from diffcore.random import stream
from diffcore.tensor import Tensor, as_tensor, concat, stack

logger = logging.getLogger(__name__)


SEQ2SEQ_KINDS = ('v2ls', 'v2vs', 'v2vsls')
FEED_MODES = ('predicted', 'teacher_forced')


@dataclass
class Seq2SeqConfig:
    """Hyperparameters of one encoder-decoder model."""

    kind: str
    d: int
    n_classes: int
    k: int = 5
    hidden: int = 128
    tau: float = 0.85
    alpha: float = 9.5
    lam: float = 0.12
    dropout: float = 0.2
    feed_mode: str = 'predicted'
    batch_norm: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SEQ2SEQ_KINDS:
            raise ParameterError(f"unknown seq2seq kind '{self.kind}', expected one of {SEQ2SEQ_KINDS}")
        if self.feed_mode not in FEED_MODES:
            raise ParameterError(f"unknown feed mode '{self.feed_mode}', expected one of {FEED_MODES}")
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.alpha < 0 or self.lam < 0:
            raise ParameterError(f"alpha and lambda must be non-negative, got {self.alpha} and {self.lam}")
        if self.k < 1 or self.d < 1 or self.hidden < 1:
            raise ParameterError(f"K, d and hidden must be positive, got {self.k}, {self.d}, {self.hidden}")
        if self.n_classes < 2:
            raise ParameterError(f"at least 2 classes are required, got {self.n_classes}")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout rate must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PredictionBundle:
    """
    Outputs of one forward pass over a batch of m inputs.

    label_steps[t] is Y^P_t [m x C], label is their mean Y^P, vector_steps[t]
    is X^P_t [m x d]. Absent outputs are empty lists / None.
    """

    label_steps: List[Tensor] = field(default_factory=list)
    label: Optional[Tensor] = None
    vector_steps: List[Tensor] = field(default_factory=list)

    @property
    def has_labels(self) -> bool:
        return self.label is not None

    @property
    def has_vectors(self) -> bool:
        return bool(self.vector_steps)

    def probabilities(self) -> np.ndarray:
        return self.label.data

    def step_probabilities(self) -> np.ndarray:
        """[m x K x C] per-step label distributions."""
        return np.stack([y.data for y in self.label_steps], axis=1)

    def vectors(self) -> np.ndarray:
        """[m x K x d] predicted neighbor vectors."""
        return np.stack([v.data for v in self.vector_steps], axis=1)


def average_steps(steps: List[Tensor]) -> Tensor:
    return stack(steps, axis=0).mean(axis=0)


@dataclass
class Seq2SeqState:
    """Encoder final state plus every decoder state produced so far."""

    encoder_h: Tensor
    encoder_c: Tensor
    limit: int
    decoder_h: List[Tensor] = field(default_factory=list)
    decoder_c: List[Tensor] = field(default_factory=list)
    outputs: List[Tensor] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.outputs)

    @property
    def h(self) -> Tensor:
        return self.decoder_h[-1] if self.decoder_h else self.encoder_h

    @property
    def c(self) -> Tensor:
        return self.decoder_c[-1] if self.decoder_c else self.encoder_c


class Seq2SeqKNN:
    """
    V2LS / V2VS / V2VSLS.

    The decoder consumes [previous feed ; encoder hidden state] at each step
    and starts from the encoder's final state. Its output y_t is the decoder
    hidden state. The feed is the previous label distribution (or the
    one-hot target label under teacher forcing); v2vs, which has no label
    head, feeds its previous vector through a learned projection instead.
    """

    def __init__(self, config: Seq2SeqConfig):
        self.config = config
        self.kind = config.kind
        self.store = ParameterStore()
        rng = stream(config.seed, 'init')
        d, C, hidden = config.d, config.n_classes, config.hidden

        self.encoder = LSTMParameters.create(self.store, 'encoder', d, hidden, rng)
        self.decoder = LSTMParameters.create(self.store, 'decoder', C + hidden, hidden, rng)
        self.encoder_norm = BatchNorm(self.store, 'encoder_norm', hidden) if config.batch_norm else None
        self.start = self.store.create('feed.start', np.full(C, 1.0 / C))

        if self.predicts_labels:
            self.W_y = self.store.create('label_head.W', uniform_init(rng, (hidden, C), hidden))
            self.b_y = self.store.create('label_head.b', uniform_init(rng, (C,), hidden))
        if self.predicts_vectors:
            self.W_x1 = self.store.create('vector_head.W1', uniform_init(rng, (hidden, hidden), hidden))
            self.b_x1 = self.store.create('vector_head.b1', uniform_init(rng, (hidden,), hidden))
            self.W_x2 = self.store.create('vector_head.W2', uniform_init(rng, (hidden, d), hidden))
            self.b_x2 = self.store.create('vector_head.b2', uniform_init(rng, (d,), hidden))
        if self.kind == 'v2vs':
            self.W_feed = self.store.create('feed.W', uniform_init(rng, (d, C), d))
            self.b_feed = self.store.create('feed.b', uniform_init(rng, (C,), d))

        logger.debug(f"Built {self.kind} with {len(self.store)} parameter tensors")

    @property
    def predicts_labels(self) -> bool:
        return self.kind in ('v2ls', 'v2vsls')

    @property
    def predicts_vectors(self) -> bool:
        return self.kind in ('v2vs', 'v2vsls')

    def encode(self, x, training: bool = False) -> Seq2SeqState:
        """One LSTM step from a zero state over the length-1 input sequence."""
        x = as_tensor(np.atleast_2d(x.data if isinstance(x, Tensor) else x))
        if x.shape[-1] != self.config.d:
            raise DimensionError(f"input has {x.shape[-1]} features, model expects {self.config.d}")
        zeros = np.zeros((x.shape[0], self.config.hidden))
        h, c = lstm_cell_step(x, zeros, zeros, self.encoder)
        if self.encoder_norm is not None:
            h = self.encoder_norm(h, training)
        return Seq2SeqState(encoder_h=h, encoder_c=c, limit=self.config.k)

    def decode_step(self, prev_feed, state: Seq2SeqState) -> Tensor:
        """
        Advance the decoder by one step and return y_t.

        Raises:
            ParameterError: If K steps have already been taken
        """
        if state.steps >= state.limit:
            raise ParameterError(f"decoder already produced K={state.limit} steps")
        step_input = concat([prev_feed, state.encoder_h], axis=-1)
        h, c = lstm_cell_step(step_input, state.h, state.c, self.decoder)
        state.decoder_h.append(h)
        state.decoder_c.append(c)
        state.outputs.append(h)
        return h

    def label_head(self, y_t) -> Tensor:
        return softmax_with_temperature(affine(y_t, self.W_y, self.b_y), self.config.tau)

    def vector_head(self, y_t) -> Tensor:
        return affine(activation(affine(y_t, self.W_x1, self.b_x1), 'relu'), self.W_x2, self.b_x2)

    def _feed_vector(self, vector) -> Tensor:
        return affine(vector, self.W_feed, self.b_feed)

    def forward(
        self,
        x,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        target_labels: Optional[np.ndarray] = None,
        target_vectors: Optional[np.ndarray] = None
    ) -> PredictionBundle:
        """
        Encode ``x`` [m x d] and decode K steps.

        Targets are only read under teacher forcing in training mode.
        """
        state = self.encode(x, training)
        m = state.encoder_h.shape[0]
        teacher = training and self.config.feed_mode == 'teacher_forced'
        eye = np.eye(self.config.n_classes)
        feed = self.start * np.ones((m, 1))
        bundle = PredictionBundle()

        for t in range(self.config.k):
            y_t = self.decode_step(feed, state)
            y_t = dropout(y_t, self.config.dropout, training, rng)
            label_t = self.label_head(y_t) if self.predicts_labels else None
            vector_t = self.vector_head(y_t) if self.predicts_vectors else None
            if label_t is not None:
                bundle.label_steps.append(label_t)
            if vector_t is not None:
                bundle.vector_steps.append(vector_t)

            if self.kind == 'v2vs':
                previous = target_vectors[:, t] if teacher and target_vectors is not None else vector_t
                feed = self._feed_vector(previous)
            elif teacher and target_labels is not None:
                feed = Tensor(eye[target_labels[:, t]])
            else:
                feed = label_t

        if bundle.label_steps:
            bundle.label = average_steps(bundle.label_steps)
        return bundle
