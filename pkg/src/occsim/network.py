"""Worst-case schedules over line networks and their per-chunk flow capacity.

Nodes are numbered 0 (source) .. l (sink); link ``i`` joins node ``i`` to
node ``i + 1``.  Slots and arrival ranks are 0-based here; the text file
format is 1-based.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, TextIO

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from . import _kernels as K
from .gf2 import BitMatrix, n_words, random_matrix


class ScheduleKind(str, Enum):
    ONE_IN_ONE_OUT = "one-in-one-out"
    ALL_IN_ALL_OUT = "all-in-all-out"

    @classmethod
    def parse(cls, value) -> "ScheduleKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "").replace("-", "")
        for kind in cls:
            if kind.value.replace("-", "") == key or kind.name.replace("_", "").lower() == key:
                return kind
        if key in ("oioo", "oneinoneout"):
            return cls.ONE_IN_ONE_OUT
        if key in ("aiao", "allinallout"):
            return cls.ALL_IN_ALL_OUT
        raise ValueError(f"unknown schedule kind {value!r}")


class DeliveryOrder(str, Enum):
    INORDER = "inorder"
    PERMUTED = "permuted"


TX, RX = 1, 0


@dataclass(frozen=True)
class Event:
    link: int
    slot: int
    arrival_rank: int


@njit(cache=True)
def _build_actions(one_in_one_out, l, n, slot_of_rank):
    total = 2 * l * n
    out = np.empty((total, 3), np.int32)
    pos = np.zeros(l + 1, np.int64)
    sent = np.zeros((l, n), np.bool_)
    m = 0
    while m < total:
        for node in range(l + 1):
            length = n if (node == 0 or node == l) else 2 * n
            p = pos[node]
            if p >= length:
                continue
            if node == 0:
                is_tx, ordinal = 1, p
            elif node == l:
                is_tx, ordinal = 0, p
            elif one_in_one_out:
                is_tx, ordinal = p % 2, p // 2
            elif p >= n:
                is_tx, ordinal = 1, p - n
            else:
                is_tx, ordinal = 0, p
            if is_tx:
                link = node
                sent[link, ordinal] = True
            else:
                link = node - 1
                if not sent[link, slot_of_rank[link, ordinal]]:
                    continue
            out[m, 0] = is_tx
            out[m, 1] = link
            out[m, 2] = ordinal
            pos[node] += 1
            m += 1
    return out


@njit(cache=True)
def _check_actions(one_in_one_out, l, n, actions, slot_of_rank):
    """0 if the action list is a valid worst-case schedule of its kind, else an error code."""
    tx = np.zeros(l + 1, np.int64)
    rx = np.zeros(l + 1, np.int64)
    sent = np.zeros((l, n), np.bool_)
    for a in range(actions.shape[0]):
        is_tx, link, ordinal = actions[a, 0], actions[a, 1], actions[a, 2]
        if is_tx:
            node = link
            if ordinal != tx[node]:
                return 1
            if sent[link, ordinal]:
                return 1
            sent[link, ordinal] = True
            tx[node] += 1
            if 0 < node < l:
                if tx[node] > rx[node]:
                    return 2  # transmitted more than received
                if one_in_one_out and tx[node] != rx[node]:
                    return 3
                if not one_in_one_out and rx[node] != n:
                    return 4
        else:
            node = link + 1
            if ordinal != rx[node]:
                return 1
            if not sent[link, slot_of_rank[link, ordinal]]:
                return 5  # received before sent
            rx[node] += 1
            if one_in_one_out and 0 < node < l and rx[node] != tx[node] + 1:
                return 3
    for node in range(l + 1):
        if node < l and tx[node] != n:
            return 6
        if node > 0 and rx[node] != n:
            return 6
    return 0


_CHECK_MESSAGES = {
    1: "slots or ranks out of sequence",
    2: "an interior node sent more packets than it had received",
    3: "one-in-one-out interleaving violated",
    4: "all-in-all-out node transmitted before its last arrival",
    5: "packet received before it was sent",
    6: "some node does not send/receive exactly n packets",
}


@dataclass(frozen=True, eq=False)
class Schedule:
    """A worst-case schedule of capacity ``n`` over a line of ``l`` links.

    ``arrival[i, s]`` is the arrival rank at node ``i + 1`` of the packet sent
    in slot ``s`` of link ``i``.  ``actions`` is the global order of transmit
    and receive occurrences as rows ``(is_tx, link, ordinal)``.
    """

    kind: ScheduleKind
    l: int
    n: int
    order: DeliveryOrder
    arrival: np.ndarray
    slot_of_rank: np.ndarray
    actions: np.ndarray

    @property
    def events(self) -> list[Event]:
        tx = self.actions[self.actions[:, 0] == TX]
        return [Event(int(i), int(s), int(self.arrival[i, s])) for _, i, s in tx]

    def validate(self) -> None:
        code = _check_actions(
            self.kind is ScheduleKind.ONE_IN_ONE_OUT, self.l, self.n, self.actions, self.slot_of_rank
        )
        if code:
            raise ValueError(f"invalid schedule: {_CHECK_MESSAGES[code]}")

    def node_sequence(self, node: int) -> list[tuple[str, int]]:
        """Local ('r'|'t', ordinal) sequence at ``node``, 0-based ordinals."""
        seq = []
        for is_tx, link, ordinal in self.actions.tolist():
            if is_tx and link == node:
                seq.append(("t", ordinal))
            elif not is_tx and link + 1 == node:
                seq.append(("r", ordinal))
        return seq


def schedule_from_arrivals(kind, arrival: np.ndarray, order: DeliveryOrder = DeliveryOrder.INORDER) -> Schedule:
    kind = ScheduleKind.parse(kind)
    arrival = np.ascontiguousarray(arrival, dtype=np.int32)
    l, n = arrival.shape
    if l < 1 or n < 1:
        raise ValueError("need l >= 1 and n >= 1")
    slot_of_rank = np.empty_like(arrival)
    for i in range(l):
        if sorted(arrival[i].tolist()) != list(range(n)):
            raise ValueError(f"arrival ranks of link {i} are not a permutation of 0..{n - 1}")
        slot_of_rank[i, arrival[i]] = np.arange(n, dtype=np.int32)
    actions = _build_actions(kind is ScheduleKind.ONE_IN_ONE_OUT, l, n, slot_of_rank)
    for a in (arrival, slot_of_rank, actions):
        a.setflags(write=False)
    sched = Schedule(kind, l, n, DeliveryOrder(order), arrival, slot_of_rank, actions)
    sched.validate()
    return sched


def generate_schedule(
    kind, l: int, n: int, order: DeliveryOrder | str = DeliveryOrder.INORDER, rng: np.random.Generator | None = None
) -> Schedule:
    """Canonical worst-case schedule; ``permuted`` draws one arrival permutation per link."""
    order = DeliveryOrder(order)
    if l < 1 or n < 1:
        raise ValueError("need l >= 1 and n >= 1")
    if order is DeliveryOrder.INORDER:
        arrival = np.tile(np.arange(n, dtype=np.int32), (l, 1))
    else:
        if rng is None:
            raise ValueError("a permuted schedule needs an rng")
        arrival = np.stack([rng.permutation(n).astype(np.int32) for _ in range(l)])
    return schedule_from_arrivals(kind, arrival, order)


def random_chunk_assignment(schedule: Schedule, q: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform chunk label for every (link, slot)."""
    return rng.integers(0, q, size=(schedule.l, schedule.n)).astype(np.int32)


def _assignment_array(schedule: Schedule, chunk_of_event) -> np.ndarray:
    if isinstance(chunk_of_event, Mapping):
        arr = np.full((schedule.l, schedule.n), -1, dtype=np.int64)
        for ev, c in chunk_of_event.items():
            arr[ev.link, ev.slot] = c
    else:
        arr = np.asarray(chunk_of_event, dtype=np.int64)
        if arr.shape != (schedule.l, schedule.n):
            raise ValueError(f"chunk assignment has shape {arr.shape}, expected {(schedule.l, schedule.n)}")
    if np.any(arr < 0):
        link, slot = np.argwhere(arr < 0)[0]
        raise ValueError(f"event on link {link} slot {slot} has no chunk")
    return arr


def min_link_count(schedule: Schedule, chunk_of_event, omega: int) -> int:
    arr = _assignment_array(schedule, chunk_of_event)
    return int((arr == omega).sum(axis=1).min())


def trellis_flow_network(schedule: Schedule, keep: np.ndarray) -> tuple[csr_matrix, int, int]:
    """Trellis as a capacity matrix; traffic edges kept where ``keep[link, slot]``.

    Vertex 0 is the source at time zero and vertex 1 the sink at the end.
    Only node occurrences touched by a kept traffic edge get a vertex; the
    memory edges between them are the contracted runs of the full trellis,
    which leaves every cut value unchanged.
    """
    acts = schedule.actions
    l, n = schedule.l, schedule.n
    is_tx = acts[:, 0] == TX
    tx_action = np.empty((l, n), dtype=np.int64)
    rx_action = np.empty((l, n), dtype=np.int64)
    idx = np.arange(acts.shape[0])
    tx_action[acts[is_tx, 1], acts[is_tx, 2]] = idx[is_tx]
    rx_action[acts[~is_tx, 1], acts[~is_tx, 2]] = idx[~is_tx]
    links, slots = np.nonzero(keep)
    tr_src_act = tx_action[links, slots]
    tr_dst_act = rx_action[links, schedule.arrival[links, slots]]

    # actions are in global time order, so sorting by action index sorts
    # each node's occurrences chronologically
    used = np.unique(np.concatenate([tr_src_act, tr_dst_act]))
    vid = np.full(acts.shape[0], -1, dtype=np.int64)
    vid[used] = np.arange(used.size) + 2
    node_of = np.where(acts[used, 0] == TX, acts[used, 1], acts[used, 1] + 1)

    src, dst = [], []
    for node in range(l + 1):
        verts = vid[used[node_of == node]]
        if verts.size == 0:
            continue
        src.append(verts[:-1])
        dst.append(verts[1:])
        if node == 0:
            src.append(np.array([0]))
            dst.append(verts[:1])
        if node == l:
            src.append(verts[-1:])
            dst.append(np.array([1]))
    mem_src = np.concatenate(src) if src else np.zeros(0, dtype=np.int64)
    mem_dst = np.concatenate(dst) if dst else np.zeros(0, dtype=np.int64)

    rows = np.concatenate([mem_src, vid[tr_src_act]])
    cols = np.concatenate([mem_dst, vid[tr_dst_act]])
    data = np.concatenate([np.full(mem_src.size, n), np.ones(tr_src_act.size)]).astype(np.int32)
    size = used.size + 2
    return csr_matrix((data, (rows, cols)), shape=(size, size)), 0, 1


def omega_capacity(schedule: Schedule, chunk_of_event, omega: int, method: str = "auto") -> int:
    """Edge-disjoint source-sink paths using only traffic edges of chunk ``omega``.

    ``method`` is ``"maxflow"``, ``"min_count"`` (valid for all-in-all-out
    only) or ``"auto"``, which takes the min-count shortcut when it applies.
    """
    arr = _assignment_array(schedule, chunk_of_event)
    if method == "auto":
        method = "min_count" if schedule.kind is ScheduleKind.ALL_IN_ALL_OUT else "maxflow"
    if method == "min_count":
        if schedule.kind is not ScheduleKind.ALL_IN_ALL_OUT:
            raise ValueError("the min-count rule only holds for all-in-all-out schedules")
        return int((arr == omega).sum(axis=1).min())
    if method != "maxflow":
        raise ValueError(f"unknown method {method!r}")
    graph, s, t = trellis_flow_network(schedule, arr == omega)
    return int(maximum_flow(graph, s, t, method="dinic").flow_value)


def sample_transfer_matrix(n: int, d: int, kind, rng: np.random.Generator) -> BitMatrix:
    """Random n x d modified transfer matrix with the kind's zero pattern.

    One-in-one-out: row ``i`` (1-based) is random on its first
    ``max(1, i - n + d)`` entries, which leaves column ``j`` random on its
    last ``d - j + 1`` entries.  All-in-all-out: every entry random.
    """
    kind = ScheduleKind.parse(kind)
    if d > n:
        raise ValueError(f"d = {d} exceeds n = {n}")
    if kind is ScheduleKind.ALL_IN_ALL_OUT:
        return random_matrix(n, d, rng)
    W = n_words(d)
    widths = np.maximum(1, np.arange(1, n + 1) - n + d)
    masks = np.zeros((n, W), dtype=np.uint64)
    for i, w in enumerate(widths.tolist()):
        full, rem = divmod(w, 64)
        masks[i, :full] = np.uint64(0xFFFFFFFFFFFFFFFF)
        if rem:
            masks[i, full] = np.uint64((1 << rem) - 1)
    words = np.empty((n, W), dtype=np.uint64)
    K.fill_random_rows(rng, words, masks)
    return BitMatrix(words, d)


@njit(cache=True)
def _transfer_rank_tail(rng, n, d, one_in_one_out, thresholds, samples):
    """Counts of samples whose rank falls below each threshold."""
    W = (d + 63) // 64
    masks = np.zeros((n, W), np.uint64)
    for i in range(n):
        w = max(1, i + 1 - n + d) if one_in_one_out else d
        for c in range(w):
            masks[i, c >> 6] |= np.uint64(1) << np.uint64(c & 63)
    words = np.empty((n, W), np.uint64)
    counts = np.zeros(thresholds.shape[0], np.int64)
    for _ in range(samples):
        K.fill_random_rows(rng, words, masks)
        r = K.rank_inplace(words, d)
        for t in range(thresholds.shape[0]):
            if r < thresholds[t]:
                counts[t] += 1
    return counts


def transfer_rank_tail(n: int, d: int, kind, gammas, samples: int, rng: np.random.Generator) -> dict[int, float]:
    """Empirical Pr[rank < d - gamma] for each gamma over ``samples`` transfer matrices."""
    kind = ScheduleKind.parse(kind)
    gammas = list(gammas)
    thresholds = np.array([d - g for g in gammas], dtype=np.int64)
    counts = _transfer_rank_tail(rng, n, d, kind is ScheduleKind.ONE_IN_ONE_OUT, thresholds, samples)
    return {g: c / samples for g, c in zip(gammas, counts.tolist())}


# ---------------------------------------------------------------------------
# text format: "link slot arrival_rank [chunk]" per line, 1-based
# ---------------------------------------------------------------------------


def dump_schedule(schedule: Schedule, out: TextIO, chunk_of_event=None) -> None:
    out.write("# occsim schedule\n")
    out.write(f"# kind={schedule.kind.value} l={schedule.l} n={schedule.n} order={schedule.order.value}\n")
    arr = None if chunk_of_event is None else _assignment_array(schedule, chunk_of_event)
    for ev in schedule.events:
        fields = [ev.link + 1, ev.slot + 1, ev.arrival_rank + 1]
        if arr is not None:
            fields.append(int(arr[ev.link, ev.slot]) + 1)
        out.write(" ".join(map(str, fields)) + "\n")


def dumps_schedule(schedule: Schedule, chunk_of_event=None) -> str:
    buf = io.StringIO()
    dump_schedule(schedule, buf, chunk_of_event)
    return buf.getvalue()


def loads_schedule(text: str, kind=None) -> tuple[Schedule, np.ndarray | None]:
    """Parse the text format; ``kind`` overrides the header when given."""
    header: dict[str, str] = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    header[key] = val
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ValueError(f"line {lineno}: expected 'link slot arrival_rank [chunk]'")
        rows.append([int(p) for p in parts])
    if not rows:
        raise ValueError("schedule file has no events")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError("either every event carries a chunk or none does")
    data = np.array(rows, dtype=np.int64) - 1
    l = int(data[:, 0].max()) + 1
    n = int(data[:, 1].max()) + 1
    if "l" in header and int(header["l"]) != l or "n" in header and int(header["n"]) != n:
        raise ValueError("header l/n disagree with the events")
    if data.shape[0] != l * n:
        raise ValueError(f"expected {l * n} events for l={l}, n={n}, found {data.shape[0]}")
    arrival = np.full((l, n), -1, dtype=np.int32)
    arrival[data[:, 0], data[:, 1]] = data[:, 2]
    if np.any(arrival < 0):
        raise ValueError("duplicate (link, slot) events")
    if kind is None:
        if "kind" not in header:
            raise ValueError("schedule kind missing; pass kind or add a '# kind=...' header")
        kind = header["kind"]
    is_inorder = all(np.array_equal(arrival[i], np.arange(n)) for i in range(l))
    order = DeliveryOrder(header.get("order", "inorder" if is_inorder else "permuted"))
    sched = schedule_from_arrivals(kind, arrival, order)
    chunks = None
    if widths == {4}:
        chunks = np.full((l, n), -1, dtype=np.int32)
        chunks[data[:, 0], data[:, 1]] = data[:, 3]
    return sched, chunks


def load_schedule(path: str | Path, kind=None) -> tuple[Schedule, np.ndarray | None]:
    return loads_schedule(Path(path).read_text(encoding="utf-8"), kind)
