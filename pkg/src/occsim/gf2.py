"""Bit-packed GF(2) matrices and the elimination routines built on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K


def n_words(n_cols: int) -> int:
    return max(1, (n_cols + 63) // 64)


def pad_mask(n_cols: int) -> np.ndarray:
    """Word mask with ones exactly on the ``n_cols`` logical columns."""
    mask = np.zeros(n_words(n_cols), dtype=np.uint64)
    full, rem = divmod(n_cols, 64)
    mask[:full] = np.uint64(0xFFFFFFFFFFFFFFFF)
    if rem:
        mask[full] = np.uint64((1 << rem) - 1)
    return mask


def index_mask(indices: Iterable[int], n_cols: int) -> np.ndarray:
    mask = np.zeros(n_words(n_cols), dtype=np.uint64)
    for c in indices:
        if not 0 <= c < n_cols:
            raise IndexError(f"column {c} outside 0..{n_cols - 1}")
        mask[c >> 6] |= np.uint64(1 << (c & 63))
    return mask


def bits_of(words: np.ndarray) -> list[int]:
    """Set column indices of one packed row."""
    out = []
    for w, word in enumerate(np.asarray(words, dtype=np.uint64).tolist()):
        while word:
            low = word & -word
            out.append(w * 64 + low.bit_length() - 1)
            word ^= low
    return out


@dataclass(frozen=True, eq=False)
class BitMatrix:
    """Dense matrix over GF(2) stored as packed ``uint64`` rows.

    Instances are treated as immutable; every routine below copies before
    eliminating.
    """

    words: np.ndarray
    n_cols: int

    def __post_init__(self):
        w = np.ascontiguousarray(self.words, dtype=np.uint64)
        if w.ndim != 2 or w.shape[1] != n_words(self.n_cols):
            raise ValueError(f"words shape {w.shape} does not fit {self.n_cols} columns")
        if self.n_cols and w.size and np.any(w & ~pad_mask(self.n_cols)):
            raise ValueError("padding bits beyond n_cols must be zero")
        w.setflags(write=False)
        object.__setattr__(self, "words", w)

    @property
    def n_rows(self) -> int:
        return self.words.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "BitMatrix":
        return cls(np.zeros((n_rows, n_words(n_cols)), dtype=np.uint64), n_cols)

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls.from_dense(np.eye(n, dtype=np.uint8))

    @classmethod
    def from_dense(cls, a) -> "BitMatrix":
        a = np.asarray(a, dtype=np.uint8) & 1
        if a.ndim != 2:
            raise ValueError("expected a 2-D 0/1 array")
        n_rows, n_cols = a.shape
        W = n_words(n_cols)
        padded = np.zeros((n_rows, W * 64), dtype=np.uint8)
        padded[:, :n_cols] = a
        packed = np.packbits(padded.reshape(n_rows, W, 64), axis=2, bitorder="little")
        return cls(packed.view(np.uint64).reshape(n_rows, W), n_cols)

    @classmethod
    def from_rows(cls, rows: Sequence[Iterable[int]], n_cols: int) -> "BitMatrix":
        """Build from per-row collections of set column indices."""
        if not rows:
            return cls.zeros(0, n_cols)
        return cls(np.stack([index_mask(r, n_cols) for r in rows]), n_cols)

    def to_dense(self) -> np.ndarray:
        if self.n_rows == 0:
            return np.zeros((0, self.n_cols), dtype=np.uint8)
        raw = self.words.view(np.uint8).reshape(self.n_rows, -1, 8)
        bits = np.unpackbits(raw, axis=2, bitorder="little")
        return bits.reshape(self.n_rows, -1)[:, : self.n_cols]

    def row_support(self, i: int) -> list[int]:
        return bits_of(self.words[i])

    def take_rows(self, idx) -> "BitMatrix":
        return BitMatrix(self.words[np.asarray(idx, dtype=np.int64)], self.n_cols)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.n_cols == other.n_cols and np.array_equal(self.words, other.words)

    def __repr__(self) -> str:
        return f"BitMatrix({self.n_rows}x{self.n_cols})"


def rank(M: BitMatrix) -> int:
    if M.n_rows == 0 or M.n_cols == 0:
        return 0
    return int(K.rank_inplace(M.words.copy(), M.n_cols))


def _rref_arrays(M: BitMatrix, payload: np.ndarray | None = None):
    work = M.words.copy()
    pay = np.zeros((M.n_rows, 0), dtype=np.uint8) if payload is None else payload.copy()
    if M.n_rows == 0 or M.n_cols == 0:
        return work[:0], pay[:0], np.zeros(0, dtype=np.int64)
    r, pivots = K.rref_inplace(work, M.n_cols, pay)
    return work[:r], pay[:r], pivots


def rref(M: BitMatrix) -> tuple[BitMatrix, tuple[int, ...]]:
    """Reduced row-echelon form with zero rows dropped, plus pivot columns.

    Rows come out sorted by pivot, so the result is canonical for the row
    space of ``M``.  Column indices are 0-based.
    """
    R, _, pivots = _rref_arrays(M)
    return BitMatrix(R, M.n_cols), tuple(int(p) for p in pivots)


def recoverable_columns(Q: BitMatrix) -> frozenset[int]:
    """Columns ``j`` whose unit vector lies in the row space of ``Q``."""
    R, _, pivots = _rref_arrays(Q)
    if len(pivots) == 0:
        return frozenset()
    return frozenset(int(c) for c in K.singleton_pivots(R, len(pivots), pivots))


def as_payload_array(Y, n_rows: int) -> np.ndarray:
    """Stack payloads (bytes-like or uint8 rows) into an (n_rows, L) array."""
    if isinstance(Y, np.ndarray) and Y.ndim == 2:
        arr = np.ascontiguousarray(Y, dtype=np.uint8)
    else:
        rows = [np.frombuffer(bytes(y), dtype=np.uint8) for y in Y]
        if len({r.size for r in rows}) > 1:
            raise ValueError("payloads must share one length")
        arr = np.stack(rows) if rows else np.zeros((0, 0), dtype=np.uint8)
    if arr.shape[0] != n_rows:
        raise ValueError(f"{arr.shape[0]} payloads for a matrix with {n_rows} rows")
    return arr


def solve_extended(Q: BitMatrix, Y) -> np.ndarray | None:
    """Solve ``Q X = Y`` with bytewise-XOR payload arithmetic.

    ``Y`` holds one payload per row of ``Q``.  Returns an ``(n_cols, L)``
    uint8 array when ``Q`` has full column rank, else ``None``.
    """
    pay = as_payload_array(Y, Q.n_rows)
    R, Z, pivots = _rref_arrays(Q, pay)
    if len(pivots) < Q.n_cols:
        return None
    return Z


def decode_payloads(Q: BitMatrix, Y) -> dict[int, bytes]:
    """Message payloads for every recoverable column, keyed by column."""
    pay = as_payload_array(Y, Q.n_rows)
    R, Z, pivots = _rref_arrays(Q, pay)
    if len(pivots) == 0:
        return {}
    single = set(K.singleton_pivots(R, len(pivots), pivots).tolist())
    return {int(c): Z[i].tobytes() for i, c in enumerate(pivots.tolist()) if c in single}


def random_matrix(n: int, k: int, rng: np.random.Generator) -> BitMatrix:
    """n x k matrix with i.u.d. entries."""
    if n < 1 or k < 1:
        raise ValueError("random_matrix needs n, k >= 1")
    W = n_words(k)
    words = rng.integers(0, 2**64, size=(n, W), dtype=np.uint64, endpoint=False)
    return BitMatrix(words & pad_mask(k), k)


def matmul(A: BitMatrix, B: BitMatrix) -> BitMatrix:
    """Product over GF(2); used for building test systems ``Q X``."""
    if A.n_cols != B.n_rows:
        raise ValueError("inner dimensions differ")
    out = np.zeros((A.n_rows, B.words.shape[1]), dtype=np.uint64)
    dense = A.to_dense()
    for i in range(A.n_rows):
        sel = np.flatnonzero(dense[i])
        if sel.size:
            out[i] = np.bitwise_xor.reduce(B.words[sel], axis=0)
    return BitMatrix(out, B.n_cols)


def combine_payloads(Q: BitMatrix, X: np.ndarray) -> np.ndarray:
    """Payload rows ``Q X`` for message payloads ``X`` (n_cols, L)."""
    X = np.asarray(X, dtype=np.uint8)
    out = np.zeros((Q.n_rows, X.shape[1]), dtype=np.uint8)
    dense = Q.to_dense()
    for i in range(Q.n_rows):
        sel = np.flatnonzero(dense[i])
        if sel.size:
            out[i] = np.bitwise_xor.reduce(X[sel], axis=0)
    return out
