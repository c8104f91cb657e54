import numpy as np
import pytest

from groundbox import tensor as T
from groundbox.encoders import (PositionalEncoding, ProposalEncoder,
                                QueryEncoder, VocabularyError)
from groundbox.gradcheck import finite_diff_check
from groundbox.tensor import ShapeError, Tape, Tensor, backward


def test_query_encoder_is_row_lookup():
    enc = QueryEncoder(V=7, d=4, rng=np.random.default_rng(0))
    q = enc.encode([3, 0, 3])
    assert q.shape == (3, 4)
    assert np.allclose(q.data[0], enc.W.data[3])
    assert np.allclose(q.data[1], enc.W.data[0])
    assert np.allclose(q.data[0], q.data[2])


def test_query_encoder_matches_onehot_matmul():
    enc = QueryEncoder(V=5, d=3, rng=np.random.default_rng(1))
    onehot = np.zeros((2, 5))
    onehot[0, 4] = 1.0
    onehot[1, 1] = 1.0
    assert np.allclose(enc.encode([4, 1]).data, onehot @ enc.W.data)


def test_query_encoder_rejects_out_of_range():
    enc = QueryEncoder(V=5, d=3, rng=np.random.default_rng(0))
    with pytest.raises(VocabularyError):
        enc.encode([5])
    with pytest.raises(VocabularyError):
        enc.encode([-1])
    with pytest.raises(VocabularyError):
        enc.encode([])


def test_query_encoder_gradient_accumulates_on_repeat():
    enc = QueryEncoder(V=4, d=2, rng=np.random.default_rng(0))
    with Tape():
        backward(T.sum_all(enc.encode([2, 2])))
    g = enc.W.grad
    assert np.allclose(g[2], 2.0)  # row used twice
    assert np.allclose(g[[0, 1, 3]], 0.0)


def test_proposal_encoder_shapes_and_hidden_width():
    enc = ProposalEncoder(D_in=2048, d=128, rng=np.random.default_rng(0))
    assert enc.W1.shape == (2048, 512)  # round(sqrt(2048*128))
    out = enc.encode(np.zeros((6, 2048), dtype=np.float32))
    assert out.shape == (6, 128)


def test_proposal_encoder_rejects_wrong_width():
    enc = ProposalEncoder(D_in=10, d=4, rng=np.random.default_rng(0))
    with pytest.raises(ShapeError):
        enc.encode(np.zeros((3, 11)))


def test_proposal_encoder_eval_deterministic_train_stochastic():
    enc = ProposalEncoder(D_in=10, d=4, rng=np.random.default_rng(0), p_drop=0.5)
    x = np.random.default_rng(1).standard_normal((3, 10))
    a = enc.encode(x, training=False).data
    b = enc.encode(x, training=False).data
    assert np.array_equal(a, b)
    c = enc.encode(x, training=True, rng=np.random.default_rng(2)).data
    d = enc.encode(x, training=True, rng=np.random.default_rng(3)).data
    assert not np.array_equal(c, d)


def test_proposal_encoder_gradcheck():
    enc = ProposalEncoder(D_in=6, d=3, rng=np.random.default_rng(4), p_drop=0.0)
    x = np.random.default_rng(5).standard_normal((4, 6))

    def f():
        return T.mean_all(T.sigmoid(enc.encode(x)))

    err, _ = finite_diff_check(f, enc.params(), step=1e-5)
    assert err < 1e-4


def test_positional_encoding_first_row_and_ranges():
    pe = PositionalEncoding(max_len=16, width=8)
    assert np.allclose(pe.table[0, 0::2], 0.0)  # sin(0)
    assert np.allclose(pe.table[0, 1::2], 1.0)  # cos(0)
    assert np.all(np.abs(pe.table) <= 1.0)


def test_positional_encoding_known_entries():
    pe = PositionalEncoding(max_len=4, width=4)
    assert abs(pe.table[1, 0] - np.sin(1.0)) < 1e-12
    assert abs(pe.table[1, 2] - np.sin(1.0 / 10000.0 ** 0.5)) < 1e-12


def test_positional_encoding_distinguishes_positions():
    pe = PositionalEncoding(max_len=32, width=16)
    rows = pe.table
    for i in range(31):
        assert not np.allclose(rows[i], rows[i + 1])


def test_positional_apply_adds_prefix_rows():
    pe = PositionalEncoding(max_len=8, width=4)
    x = Tensor(np.zeros((3, 4)))
    assert np.allclose(pe.apply(x).data, pe.table[:3])


def test_positional_apply_rejects_long_sequence():
    pe = PositionalEncoding(max_len=2, width=4)
    with pytest.raises(ShapeError):
        pe.apply(Tensor(np.zeros((3, 4))))
