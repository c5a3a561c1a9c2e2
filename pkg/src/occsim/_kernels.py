"""Numba kernels shared by the GF(2), banded-matrix and simulation modules.

Rows are bit-packed into ``uint64`` words, LSB first: column ``c`` lives in
word ``c >> 6`` at bit ``c & 63``.  All randomness is drawn from a numpy
``Generator`` passed in by the caller so results depend only on its seed.
"""

import numpy as np
from numba import njit

ONE = np.uint64(1)
ZERO = np.uint64(0)
_TWO32 = 4294967296.0


@njit(cache=True)
def rand_u64(rng):
    hi = np.uint64(int(rng.random() * _TWO32))
    lo = np.uint64(int(rng.random() * _TWO32))
    return (hi << np.uint64(32)) | lo


@njit(cache=True)
def rand_below(rng, m):
    # uniform on [0, m); bias is below 2**-50 for any m used here
    v = int(rng.random() * m)
    return v if v < m else m - 1


@njit(cache=True)
def shuffle_inplace(rng, a):
    for i in range(a.shape[0] - 1, 0, -1):
        j = rand_below(rng, i + 1)
        t = a[i]
        a[i] = a[j]
        a[j] = t


@njit(cache=True)
def fill_random_rows(rng, words, masks):
    """Overwrite each row with uniform bits restricted to ``masks`` (same shape)."""
    n_rows, W = words.shape
    for i in range(n_rows):
        for j in range(W):
            m = masks[i, j]
            words[i, j] = rand_u64(rng) & m if m != ZERO else ZERO


@njit(cache=True)
def row_is_zero(words, i):
    for j in range(words.shape[1]):
        if words[i, j] != ZERO:
            return False
    return True


@njit(cache=True)
def popcount64(x):
    c = 0
    while x != ZERO:
        x &= x - ONE
        c += 1
    return c


@njit(cache=True)
def rank_inplace(words, n_cols):
    """Forward elimination; returns the rank and destroys ``words``."""
    n_rows, W = words.shape
    r = 0
    for c in range(n_cols):
        if r == n_rows:
            break
        w = c >> 6
        b = ONE << np.uint64(c & 63)
        piv = -1
        for i in range(r, n_rows):
            if words[i, w] & b:
                piv = i
                break
        if piv < 0:
            continue
        if piv != r:
            for j in range(w, W):
                t = words[r, j]
                words[r, j] = words[piv, j]
                words[piv, j] = t
        for i in range(piv + 1, n_rows):
            if words[i, w] & b:
                for j in range(w, W):
                    words[i, j] ^= words[r, j]
        r += 1
    return r


@njit(cache=True)
def rref_inplace(words, n_cols, pay):
    """Gauss-Jordan elimination of ``[words | pay]``.

    On return rows ``0..r-1`` hold the reduced row-echelon form ordered by
    pivot column and the remaining rows are zero.  ``pay`` (one byte row per
    matrix row, possibly zero width) receives the same row operations.
    """
    n_rows, W = words.shape
    L = pay.shape[1]
    pivots = np.empty(min(n_rows, n_cols), np.int64)
    r = 0
    for c in range(n_cols):
        if r == n_rows:
            break
        w = c >> 6
        b = ONE << np.uint64(c & 63)
        piv = -1
        for i in range(r, n_rows):
            if words[i, w] & b:
                piv = i
                break
        if piv < 0:
            continue
        if piv != r:
            for j in range(w, W):
                t = words[r, j]
                words[r, j] = words[piv, j]
                words[piv, j] = t
            for j in range(L):
                t8 = pay[r, j]
                pay[r, j] = pay[piv, j]
                pay[piv, j] = t8
        for i in range(n_rows):
            if i != r and (words[i, w] & b):
                for j in range(w, W):
                    words[i, j] ^= words[r, j]
                for j in range(L):
                    pay[i, j] ^= pay[r, j]
        pivots[r] = c
        r += 1
    return r, pivots[:r]


@njit(cache=True)
def singleton_pivots(words, r, pivots):
    """Pivot columns whose RREF row has no other nonzero entry."""
    out = np.empty(r, np.int64)
    m = 0
    for i in range(r):
        cnt = 0
        for j in range(words.shape[1]):
            cnt += popcount64(words[i, j])
            if cnt > 1:
                break
        if cnt == 1:
            out[m] = pivots[i]
            m += 1
    return out[:m]


# ---------------------------------------------------------------------------
# banded random binary matrices
# ---------------------------------------------------------------------------


@njit(cache=True)
def sample_banded_inplace(rng, words, aperture_masks, regular, assign):
    """Fill ``words`` with a banded sample.

    ``aperture_masks`` is (chi, W); ``assign`` is scratch of length n_rows
    that receives the aperture index of every row.
    """
    n_rows, W = words.shape
    chi = aperture_masks.shape[0]
    if regular:
        per = n_rows // chi
        for a in range(chi):
            for t in range(per):
                assign[a * per + t] = a
        shuffle_inplace(rng, assign)
    else:
        for i in range(n_rows):
            assign[i] = rand_below(rng, chi)
    for i in range(n_rows):
        a = assign[i]
        for j in range(W):
            m = aperture_masks[a, j]
            words[i, j] = rand_u64(rng) & m if m != ZERO else ZERO


@njit(cache=True)
def banded_full_rank_count(rng, n_rows, k, aperture_masks, regular, trials):
    W = aperture_masks.shape[1]
    words = np.empty((n_rows, W), np.uint64)
    assign = np.empty(n_rows, np.int64)
    hits = 0
    for _ in range(trials):
        sample_banded_inplace(rng, words, aperture_masks, regular, assign)
        if rank_inplace(words, k) == k:
            hits += 1
    return hits
