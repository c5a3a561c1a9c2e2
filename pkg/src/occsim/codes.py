"""Dense, chunked (CC) and overlapped chunked (OCC) codes run over a schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from numba import njit

from . import _kernels as K
from .gf2 import BitMatrix, bits_of, decode_payloads, index_mask, n_words, rank, recoverable_columns
from .network import Schedule
from .stats import mean_and_stderr, wilson_interval

ZERO_RETRIES = 32


class Variant(str, Enum):
    DENSE = "dense"
    CC = "CC"
    OCC = "OCC"


@dataclass(frozen=True, eq=False)
class ChunkScheme:
    """Chunking of ``k`` message packets into ``q`` apertures of size ``alpha``.

    ``gamma`` is the overlap of neighbouring apertures (0 for dense and CC)
    and ``tau`` the overlap parameter, ``gamma = alpha * (tau - 1) / tau``.
    """

    variant: Variant
    k: int
    alpha: int
    tau: int
    gamma: int
    q: int
    apertures: tuple[tuple[int, ...], ...]
    masks: np.ndarray = field(repr=False)

    @property
    def tau_e(self) -> float:
        return self.tau / (self.tau - 1) if self.tau > 1 else float("inf")

    def aperture_mask(self, omega: int) -> np.ndarray:
        return self.masks[omega]


def _variant(kind) -> Variant:
    if isinstance(kind, Variant):
        return kind
    for v in Variant:
        if v.value.lower() == str(kind).lower():
            return v
    raise ValueError(f"unknown code family {kind!r}")


def make_scheme(kind: Variant | str, k: int, alpha: int | None = None, tau: int = 1) -> ChunkScheme:
    """Validated scheme; divisibility problems raise instead of rounding."""
    variant = _variant(kind)
    if k < 1:
        raise ValueError("k must be positive")
    if variant is Variant.DENSE:
        alpha, tau = k, 1
    if alpha is None or not 1 <= alpha <= k:
        raise ValueError(f"aperture size must lie in 1..{k}")
    if variant in (Variant.DENSE, Variant.CC):
        if tau != 1:
            raise ValueError("chunked codes without overlap have tau = 1")
        if k % alpha:
            raise ValueError(f"alpha = {alpha} must divide k = {k}")
        gamma, step = 0, alpha
    else:
        if tau < 2:
            raise ValueError("OCC needs an overlap parameter tau >= 2")
        if alpha % tau:
            raise ValueError(f"tau = {tau} must divide alpha = {alpha}")
        step = alpha // tau
        gamma = alpha - step
        if k % step:
            raise ValueError(f"alpha / tau = {step} must divide k = {k}")
    q = k // step
    aps = tuple(tuple((w * step + t) % k for t in range(alpha)) for w in range(q))
    masks = np.stack([index_mask(a, k) for a in aps])
    masks.setflags(write=False)
    return ChunkScheme(variant, k, alpha, tau, gamma, q, aps, masks)


def scheme_for(k: int, alpha: int, tau: int) -> ChunkScheme:
    """Dense when ``alpha == k`` and ``tau == 1``, CC when ``tau == 1``, OCC otherwise."""
    if tau == 1:
        return make_scheme(Variant.DENSE if alpha == k else Variant.CC, k, alpha, 1)
    return make_scheme(Variant.OCC, k, alpha, tau)


# ---------------------------------------------------------------------------
# encoding kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _encode_source(rng, masks, messages, out_gev, out_pay, retries):
    """Random combination of one chunk's message packets; returns (omega, zero)."""
    q, W = masks.shape
    omega = K.rand_below(rng, q)
    zero = True
    for _ in range(retries):
        for j in range(W):
            m = masks[omega, j]
            out_gev[j] = K.rand_u64(rng) & m if m != K.ZERO else K.ZERO
            if out_gev[j] != K.ZERO:
                zero = False
        if not zero:
            break
    L = out_pay.shape[0]
    out_pay[:] = 0
    if L and not zero:
        for j in range(W):
            x = out_gev[j]
            while x != K.ZERO:
                low = x & (~x + K.ONE)
                b = K.popcount64(low - K.ONE)
                row = j * 64 + b
                for t in range(L):
                    out_pay[t] ^= messages[row, t]
                x ^= low
    return omega, zero


@njit(cache=True)
def _encode_interior(rng, gev, pay, members, mcount, allow_empty, out_gev, out_pay, coef, retries):
    """Random combination of the stored packets of one chunk; returns (omega, zero).

    ``members[w, :mcount[w]]`` index the rows of ``gev``/``pay`` holding
    chunk-``w`` packets.  The chunk is uniform over chunks with at least one
    stored packet, or over all chunks when ``allow_empty``.
    """
    q = mcount.shape[0]
    W = gev.shape[1]
    L = pay.shape[1]
    out_gev[:] = 0
    out_pay[:] = 0
    if allow_empty:
        omega = K.rand_below(rng, q)
    else:
        eligible = 0
        for w in range(q):
            if mcount[w] > 0:
                eligible += 1
        if eligible == 0:
            return K.rand_below(rng, q), True
        pick = K.rand_below(rng, eligible)
        omega = -1
        for w in range(q):
            if mcount[w] > 0:
                if pick == 0:
                    omega = w
                    break
                pick -= 1
    m = mcount[omega]
    if m == 0:
        return omega, True
    nc = (m + 63) >> 6
    zero = True
    for _ in range(retries):
        for c in range(nc):
            coef[c] = K.rand_u64(rng)
        for j in range(W):
            out_gev[j] = K.ZERO
        for t in range(m):
            if (coef[t >> 6] >> np.uint64(t & 63)) & K.ONE:
                row = members[omega, t]
                for j in range(W):
                    out_gev[j] ^= gev[row, j]
        for j in range(W):
            if out_gev[j] != K.ZERO:
                zero = False
                break
        if not zero:
            break
    if zero:
        for j in range(W):
            out_gev[j] = K.ZERO
    elif L:
        for t in range(m):
            if (coef[t >> 6] >> np.uint64(t & 63)) & K.ONE:
                row = members[omega, t]
                for s in range(L):
                    out_pay[s] ^= pay[row, s]
    return omega, zero


@njit(cache=True)
def _store(gev, pay, chunk, members, mcount, count, pkt_gev, pkt_pay, omega):
    i = count
    gev[i, :] = pkt_gev
    pay[i, :] = pkt_pay
    chunk[i] = omega
    members[omega, mcount[omega]] = i
    mcount[omega] += 1


@njit(cache=True)
def _transmit(rng, actions, slot_of_rank, l, n, masks, messages, allow_empty, retries):
    """Run every action of a schedule; returns all node buffers and the waste count."""
    q, W = masks.shape
    L = messages.shape[1]
    gev = np.zeros((l + 1, n, W), np.uint64)
    pay = np.zeros((l + 1, n, L), np.uint8)
    chunk = np.full((l + 1, n), -1, np.int32)
    members = np.zeros((l + 1, q, n), np.int64)
    mcount = np.zeros((l + 1, q), np.int64)
    count = np.zeros(l + 1, np.int64)
    fly_gev = np.zeros((l, n, W), np.uint64)
    fly_pay = np.zeros((l, n, L), np.uint8)
    fly_chunk = np.zeros((l, n), np.int32)
    coef = np.zeros((n + 63) // 64 + 1, np.uint64)
    wasted = 0
    for a in range(actions.shape[0]):
        is_tx, link, ordinal = actions[a, 0], actions[a, 1], actions[a, 2]
        if is_tx:
            if link == 0:
                omega, zero = _encode_source(rng, masks, messages, fly_gev[0, ordinal], fly_pay[0, ordinal], retries)
            else:
                omega, zero = _encode_interior(
                    rng, gev[link], pay[link], members[link], mcount[link], allow_empty,
                    fly_gev[link, ordinal], fly_pay[link, ordinal], coef, retries,
                )
            fly_chunk[link, ordinal] = omega
            if zero:
                wasted += 1
        else:
            node = link + 1
            s = slot_of_rank[link, ordinal]
            _store(gev[node], pay[node], chunk[node], members[node], mcount[node], count[node],
                   fly_gev[link, s], fly_pay[link, s], fly_chunk[link, s])
            count[node] += 1
    return gev, pay, chunk, fly_gev, fly_chunk, wasted


# ---------------------------------------------------------------------------
# Python-facing state and single-packet encoding
# ---------------------------------------------------------------------------


class NodeState:
    """Packets held by one receiving node, grouped by chunk."""

    def __init__(self, scheme: ChunkScheme, capacity: int, payload_len: int = 0):
        self.scheme = scheme
        W = n_words(scheme.k)
        self.gev = np.zeros((capacity, W), dtype=np.uint64)
        self.pay = np.zeros((capacity, payload_len), dtype=np.uint8)
        self.chunk = np.full(capacity, -1, dtype=np.int32)
        self.members = np.zeros((scheme.q, capacity), dtype=np.int64)
        self.mcount = np.zeros(scheme.q, dtype=np.int64)
        self.count = 0

    def receive(self, omega: int, gev: np.ndarray, payload: np.ndarray | bytes | None = None) -> None:
        if self.count == self.gev.shape[0]:
            raise OverflowError("node buffer full")
        gev = np.asarray(gev, dtype=np.uint64)
        if np.any(gev & ~self.scheme.masks[omega]):
            raise ValueError(f"vector support leaves aperture of chunk {omega}")
        pay = np.zeros(self.pay.shape[1], dtype=np.uint8)
        if payload is not None:
            pay[:] = np.frombuffer(bytes(payload), dtype=np.uint8) if not isinstance(payload, np.ndarray) else payload
        _store(self.gev, self.pay, self.chunk, self.members, self.mcount, self.count, gev, pay, omega)
        self.count += 1

    def chunk_vectors(self, omega: int) -> BitMatrix:
        return BitMatrix(self.gev[self.members[omega, : self.mcount[omega]]], self.scheme.k)


def encode_packet(
    state: NodeState | None,
    scheme: ChunkScheme,
    rng: np.random.Generator,
    messages: np.ndarray | None = None,
    allow_empty: bool = False,
    retries: int = ZERO_RETRIES,
) -> tuple[int, np.ndarray, np.ndarray | None, bool]:
    """One coded packet from ``state`` (``None`` means the source).

    Returns ``(omega, gev_words, payload, zero)``; ``zero`` flags a packet
    whose global encoding vector stayed all-zero after ``retries`` draws.
    """
    W = n_words(scheme.k)
    out_gev = np.zeros(W, dtype=np.uint64)
    if state is None:
        msgs = np.zeros((scheme.k, 0), dtype=np.uint8) if messages is None else np.asarray(messages, dtype=np.uint8)
        out_pay = np.zeros(msgs.shape[1], dtype=np.uint8)
        omega, zero = _encode_source(rng, scheme.masks, msgs, out_gev, out_pay, retries)
    else:
        out_pay = np.zeros(state.pay.shape[1], dtype=np.uint8)
        coef = np.zeros(state.gev.shape[0] // 64 + 2, dtype=np.uint64)
        omega, zero = _encode_interior(
            rng, state.gev, state.pay, state.members, state.mcount, allow_empty, out_gev, out_pay, coef, retries
        )
    return int(omega), out_gev, (out_pay if out_pay.size else None), bool(zero)


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Transmission:
    """Everything a trial put on the wire; node ``i`` buffers are ``gev[i]`` etc."""

    gev: np.ndarray
    payload: np.ndarray
    chunk: np.ndarray
    sent_gev: np.ndarray
    sent_chunk: np.ndarray
    messages: np.ndarray
    wasted: int

    def node_matrix(self, node: int, k: int) -> BitMatrix:
        return BitMatrix(self.gev[node], k)


@dataclass(frozen=True)
class TrialOutcome:
    success: bool
    recovered: frozenset[int]
    n_received: int
    chunk_ranks: tuple[int, ...] | None = None
    payload_verified: bool | None = None
    wasted: int = 0


def transmit(
    schedule: Schedule,
    scheme: ChunkScheme,
    rng: np.random.Generator,
    payload_len: int | None = None,
    allow_empty: bool = False,
    retries: int = ZERO_RETRIES,
) -> Transmission:
    L = payload_len or 0
    messages = rng.integers(0, 256, size=(scheme.k, L), dtype=np.uint8)
    gev, pay, chunk, fly_gev, fly_chunk, wasted = _transmit(
        rng, schedule.actions, schedule.slot_of_rank, schedule.l, schedule.n,
        scheme.masks, messages, allow_empty, retries,
    )
    return Transmission(gev, pay, chunk, fly_gev, fly_chunk, messages, int(wasted))


def chunk_ranks(Q: BitMatrix, chunks: np.ndarray, scheme: ChunkScheme) -> tuple[int, ...]:
    return tuple(rank(Q.take_rows(np.flatnonzero(chunks == w))) for w in range(scheme.q))


def decide(tx: Transmission, schedule: Schedule, scheme: ChunkScheme) -> TrialOutcome:
    """Sink verdict: per-chunk decoding for CC, joint decoding otherwise."""
    sink = schedule.l
    Q = BitMatrix(tx.gev[sink], scheme.k)
    ranks = None
    if scheme.variant is Variant.CC:
        ranks = chunk_ranks(Q, tx.chunk[sink], scheme)
        full = [w for w, r in enumerate(ranks) if r == scheme.alpha]
        recovered = frozenset(c for w in full for c in scheme.apertures[w])
        success = len(full) == scheme.q
    else:
        recovered = recoverable_columns(Q)
        success = len(recovered) == scheme.k
    verified = None
    if tx.payload.shape[2]:
        decoded = decode_payloads(Q, tx.payload[sink])
        verified = all(decoded.get(c) == tx.messages[c].tobytes() for c in recovered)
    return TrialOutcome(success, recovered, Q.n_rows, ranks, verified, tx.wasted)


def run_trial(
    schedule: Schedule,
    scheme: ChunkScheme,
    rng: np.random.Generator,
    payload_len: int | None = None,
    allow_empty: bool = False,
) -> TrialOutcome:
    return decide(transmit(schedule, scheme, rng, payload_len, allow_empty), schedule, scheme)


@dataclass(frozen=True)
class Evaluation:
    trials: int
    failures: int
    mer: float
    mer_ci: tuple[float, float]
    per: float
    per_se: float


def evaluate(outcomes: Sequence[TrialOutcome], k: int, confidence: float = 0.95) -> Evaluation:
    """Message error rate with a Wilson interval and packet error rate with its standard error."""
    if not outcomes:
        raise ValueError("no outcomes to evaluate")
    failures = sum(not o.success for o in outcomes)
    per, se = mean_and_stderr([(k - len(o.recovered)) / k for o in outcomes])
    return Evaluation(len(outcomes), failures, failures / len(outcomes), wilson_interval(failures, len(outcomes), confidence), per, se)


def gev_support(words: np.ndarray) -> list[int]:
    return bits_of(words)
