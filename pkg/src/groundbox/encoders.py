"""Query / proposal encoders and sinusoidal positional encoding.

Object labels are one-hot, so the query encoder is a bias-free embedding
lookup. Proposal features pass through two linear layers with dropout and
ReLU after the first, reducing D_in down to the common width d.
"""

import math

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class VocabularyError(ValueError):
    pass


class QueryEncoder:
    """Bias-free linear layer over one-hot labels == row lookup into W."""

    def __init__(self, V, d, rng):
        self.V = V
        self.W = T.uniform_init(rng, (V, d), fan_in=V)

    def encode(self, label_indices):
        idx = np.asarray(label_indices, dtype=np.intp)
        if idx.size == 0:
            raise VocabularyError("encode_query: empty label list")
        if idx.min() < 0 or idx.max() >= self.V:
            raise VocabularyError(
                f"label index out of range [0, {self.V}): {label_indices}")
        return T.take(self.W, idx)  # (O, d)

    def params(self, prefix="query"):
        return {f"{prefix}.W": self.W}


class ProposalEncoder:
    """Two-layer MLP D_in -> h -> d; dropout then ReLU after layer 1.

    Hidden width defaults to round(sqrt(D_in * d)) since only the endpoints
    are fixed.
    """

    def __init__(self, D_in, d, rng, hidden=None, p_drop=0.2):
        h = hidden or max(1, round(math.sqrt(D_in * d)))
        self.D_in = D_in
        self.p_drop = p_drop
        self.W1 = T.uniform_init(rng, (D_in, h), fan_in=D_in)
        self.b1 = T.uniform_init(rng, (h,), fan_in=D_in)
        self.W2 = T.uniform_init(rng, (h, d), fan_in=h)
        self.b2 = T.uniform_init(rng, (d,), fan_in=h)

    def encode(self, features, training=False, rng=None):
        """features: (m, D_in) array or Tensor -> (m, d) Tensor."""
        x = features if isinstance(features, Tensor) else Tensor(features)
        if x.data.ndim != 2 or x.data.shape[1] != self.D_in:
            raise ShapeError(
                f"proposal features must be (m, {self.D_in}), got {x.data.shape}")
        h1 = T.relu(T.dropout(T.add_rowvec(x @ self.W1, self.b1),
                              self.p_drop, training, rng))
        return T.add_rowvec(h1 @ self.W2, self.b2)

    def params(self, prefix="prop"):
        return {f"{prefix}.W1": self.W1, f"{prefix}.b1": self.b1,
                f"{prefix}.W2": self.W2, f"{prefix}.b2": self.b2}


class PositionalEncoding:
    """Precomputed sinusoid table: pe[pos, 2i] = sin(pos / 10000^(2i/width))."""

    def __init__(self, max_len, width):
        pos = np.arange(max_len, dtype=np.float64)[:, None]
        i2 = np.arange(0, width, 2, dtype=np.float64)
        angles = pos / np.power(10000.0, i2 / width)
        table = np.zeros((max_len, width))
        table[:, 0::2] = np.sin(angles)
        table[:, 1::2] = np.cos(angles[:, : table[:, 1::2].shape[1]])
        self.table = table

    def apply(self, x):
        """Add table rows 0..L-1 to a (L, width) sequence."""
        L = x.data.shape[0]
        if L > self.table.shape[0]:
            raise ShapeError(
                f"sequence length {L} exceeds positional table {self.table.shape[0]}")
        return T.add(x, Tensor(self.table[:L]))
