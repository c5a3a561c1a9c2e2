import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from occsim.gf2 import (
    BitMatrix,
    as_payload_array,
    combine_payloads,
    decode_payloads,
    index_mask,
    matmul,
    random_matrix,
    rank,
    recoverable_columns,
    rref,
    solve_extended,
)


def bit_arrays(max_rows=12, max_cols=130):
    shape = st.tuples(st.integers(1, max_rows), st.integers(1, max_cols))
    return shape.flatmap(lambda s: arrays(np.uint8, s, elements=st.integers(0, 1)))


@pytest.mark.parametrize("shape", [(r, c) for r in range(1, 4) for c in range(1, 4)] + [(2, 4), (4, 2), (3, 4), (4, 3)])
def test_small_shapes_match_enumeration(shape):
    for a in oracles.all_matrices(*shape):
        rows = oracles.row_ints(a)
        M = BitMatrix.from_dense(a)
        R, piv = rref(M)
        basis, opiv = oracles.rref(rows)
        assert rank(M) == len(basis)
        assert list(piv) == opiv
        assert oracles.row_ints(R.to_dense()) == basis
        assert recoverable_columns(M) == oracles.recoverable(rows, shape[1])


def test_dense_round_trip_across_word_boundary():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 2, size=(5, 130), dtype=np.uint8)
    M = BitMatrix.from_dense(a)
    assert M.words.shape == (5, 3)
    assert np.array_equal(M.to_dense(), a)
    assert M.row_support(0) == list(np.flatnonzero(a[0]))


def test_padding_bits_rejected():
    with pytest.raises(ValueError):
        BitMatrix(np.array([[0b100]], dtype=np.uint64), 2)


def test_words_are_read_only():
    M = BitMatrix.identity(3)
    with pytest.raises(ValueError):
        M.words[0, 0] = 0


def test_index_mask_bounds():
    assert index_mask([0, 64], 65).tolist() == [1, 1]
    with pytest.raises(IndexError):
        index_mask([65], 65)


def test_small_examples():
    assert rref(BitMatrix.from_dense([[1, 1], [0, 1]])) == (BitMatrix.identity(2), (0, 1))
    assert recoverable_columns(BitMatrix.from_dense([[1, 0, 0], [0, 1, 1]])) == {0}
    assert rank(BitMatrix.zeros(0, 5)) == 0
    assert recoverable_columns(BitMatrix.zeros(3, 4)) == frozenset()


@settings(max_examples=150, deadline=None)
@given(bit_arrays())
def test_rref_is_canonical_and_rank_consistent(a):
    M = BitMatrix.from_dense(a)
    R, piv = rref(M)
    assert R.n_rows == rank(M) == len(piv)
    d = R.to_dense()
    # each pivot column is a unit column of R, pivots strictly increase
    for i, p in enumerate(piv):
        assert d[:, p].tolist() == [int(j == i) for j in range(R.n_rows)]
        assert not d[i, :p].any()
    assert list(piv) == sorted(piv)
    # row operations keep the row space: permuting rows leaves the rref fixed
    perm = np.random.default_rng(0).permutation(a.shape[0])
    assert rref(BitMatrix.from_dense(a[perm])) == (R, piv)


@settings(max_examples=100, deadline=None)
@given(bit_arrays(max_rows=10, max_cols=70))
def test_recoverable_columns_are_exactly_unit_vectors_in_row_space(a):
    M = BitMatrix.from_dense(a)
    rec = recoverable_columns(M)
    r = rank(M)
    for c in range(a.shape[1]):
        unit = np.zeros((1, a.shape[1]), dtype=np.uint8)
        unit[0, c] = 1
        grown = rank(BitMatrix.from_dense(np.vstack([a, unit])))
        assert (c in rec) == (grown == r)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 8), st.integers(0, 2**32 - 1), st.integers(1, 16))
def test_extended_solve_recovers_payloads(k, extra, seed, L):
    rng = np.random.default_rng(seed)
    Q = random_matrix(k + extra, k, rng)
    X = rng.integers(0, 256, size=(k, L), dtype=np.uint8)
    Y = combine_payloads(Q, X)
    got = solve_extended(Q, Y)
    if rank(Q) == k:
        assert np.array_equal(got, X)
    else:
        assert got is None
    for c, data in decode_payloads(Q, Y).items():
        assert data == X[c].tobytes()
    assert set(decode_payloads(Q, Y)) == recoverable_columns(Q)


def test_payload_shape_errors():
    with pytest.raises(ValueError):
        as_payload_array([b"ab", b"abc"], 2)
    with pytest.raises(ValueError):
        as_payload_array([b"ab"], 2)


def test_matmul_matches_dense_product():
    rng = np.random.default_rng(3)
    A = rng.integers(0, 2, size=(6, 9), dtype=np.uint8)
    Bm = rng.integers(0, 2, size=(9, 70), dtype=np.uint8)
    got = matmul(BitMatrix.from_dense(A), BitMatrix.from_dense(Bm)).to_dense()
    assert np.array_equal(got, (A.astype(int) @ Bm.astype(int)) % 2)


def test_random_matrix_entries_are_balanced():
    M = random_matrix(2000, 100, np.random.default_rng(5)).to_dense()
    assert abs(M.mean() - 0.5) < 0.005
