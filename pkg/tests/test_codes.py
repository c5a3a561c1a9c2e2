import numpy as np
import pytest
from scipy.stats import chisquare

from occsim.banded import exact_full_rank_prob
from occsim.codes import (
    NodeState,
    TrialOutcome,
    Variant,
    chunk_ranks,
    decide,
    encode_packet,
    evaluate,
    gev_support,
    make_scheme,
    run_trial,
    scheme_for,
    transmit,
)
from occsim.gf2 import BitMatrix, combine_payloads, rank
from occsim.network import ScheduleKind, generate_schedule


def test_scheme_parameters():
    s = make_scheme("OCC", 256, 64, 2)
    assert (s.gamma, s.q, s.alpha) == (32, 8, 64)
    assert s.tau_e == 2.0
    s = make_scheme("OCC", 64, 32, 4)
    assert (s.gamma, s.q) == (24, 8)
    assert s.apertures[-1][:8] == (56, 57, 58, 59, 60, 61, 62, 63)
    assert s.apertures[-1][8] == 0  # end-around
    s = make_scheme("CC", 64, 32)
    assert (s.gamma, s.q) == (0, 2)
    assert sorted(c for a in s.apertures for c in a) == list(range(64))
    d = make_scheme("dense", 10)
    assert (d.q, d.alpha, d.variant) == (1, 10, Variant.DENSE)


def test_scheme_for_picks_family():
    assert scheme_for(64, 64, 1).variant is Variant.DENSE
    assert scheme_for(64, 16, 1).variant is Variant.CC
    assert scheme_for(64, 16, 2).variant is Variant.OCC


@pytest.mark.parametrize(
    "args",
    [("CC", 64, 24), ("CC", 64, 32, 2), ("OCC", 64, 32, 1), ("OCC", 64, 30, 4), ("OCC", 60, 32, 2),
     ("CC", 64, 0), ("weird", 64, 32)],
)
def test_invalid_schemes(args):
    with pytest.raises(ValueError):
        make_scheme(*args)


def test_source_packets_stay_in_aperture_and_pick_chunks_uniformly():
    s = make_scheme("OCC", 64, 16, 2)
    rng = np.random.default_rng(0)
    counts = np.zeros(s.q, int)
    for _ in range(4000):
        w, gev, _, zero = encode_packet(None, s, rng)
        assert not zero
        assert set(gev_support(gev)) <= set(s.apertures[w])
        counts[w] += 1
    assert chisquare(counts).pvalue > 1e-3


def test_interior_uses_only_eligible_chunks():
    s = make_scheme("CC", 16, 4)
    st = NodeState(s, 8)
    rng = np.random.default_rng(1)
    _, gev, _, _ = encode_packet(None, s, rng)
    w0 = next(w for w in range(s.q) if set(gev_support(gev)) <= set(s.apertures[w]))
    st.receive(w0, gev)
    picks = {encode_packet(st, s, rng)[0] for _ in range(200)}
    assert picks == {w0}
    loose = {encode_packet(st, s, rng, allow_empty=True)[0] for _ in range(200)}
    assert loose == set(range(s.q))
    # an empty chunk yields a zero packet under the loose policy
    for _ in range(50):
        w, g, _, zero = encode_packet(st, s, rng, allow_empty=True)
        if w != w0:
            assert zero and not g.any()


def test_empty_node_emits_flagged_zero_packet():
    s = make_scheme("dense", 8)
    w, g, _, zero = encode_packet(NodeState(s, 4), s, np.random.default_rng(0))
    assert zero and not g.any()


def test_zero_only_buffer_exhausts_retries():
    s = make_scheme("dense", 8)
    st = NodeState(s, 4)
    st.receive(0, np.zeros(1, np.uint64))
    assert encode_packet(st, s, np.random.default_rng(0))[3]


def test_receive_rejects_out_of_aperture_vector():
    s = make_scheme("CC", 16, 8)
    st = NodeState(s, 2)
    with pytest.raises(ValueError):
        st.receive(0, np.array([1 << 12], np.uint64))


def test_interior_packet_lies_in_span_of_its_chunk():
    s = make_scheme("OCC", 32, 8, 2)
    rng = np.random.default_rng(4)
    st = NodeState(s, 40, payload_len=6)
    msgs = rng.integers(0, 256, (32, 6), dtype=np.uint8)
    for _ in range(40):
        w, g, p, _ = encode_packet(None, s, rng, msgs)
        st.receive(w, g, p)
    for _ in range(100):
        w, g, p, zero = encode_packet(st, s, rng)
        assert not zero
        V = st.chunk_vectors(w)
        assert rank(BitMatrix(np.vstack([V.words, g[None]]), 32)) == rank(V)
        assert np.array_equal(p, combine_payloads(BitMatrix(g[None], 32), msgs)[0])


@pytest.mark.parametrize("kind", list(ScheduleKind))
@pytest.mark.parametrize("scheme", [("dense", 32), ("CC", 32, 8), ("OCC", 32, 8, 4)])
def test_every_node_buffer_is_consistent(kind, scheme):
    s = make_scheme(*scheme)
    sched = generate_schedule(kind, 3, 40, "permuted", np.random.default_rng(2))
    tx = transmit(sched, s, np.random.default_rng(3), payload_len=5)
    for node in range(1, sched.l + 1):
        Q = tx.node_matrix(node, s.k)
        assert Q.n_rows == sched.n
        for i in range(Q.n_rows):
            assert set(Q.row_support(i)) <= set(s.apertures[tx.chunk[node, i]])
        assert np.array_equal(tx.payload[node], combine_payloads(Q, tx.messages))


def test_trials_are_reproducible():
    s = make_scheme("OCC", 64, 32, 2)
    sched = generate_schedule("oioo", 2, 80)
    a = transmit(sched, s, np.random.default_rng(7), payload_len=3)
    b = transmit(sched, s, np.random.default_rng(7), payload_len=3)
    assert np.array_equal(a.gev, b.gev) and np.array_equal(a.payload, b.payload)


def test_cc_success_equals_full_rank():
    s = make_scheme("CC", 32, 8)
    sched = generate_schedule("oioo", 2, 64)
    seen = set()
    rng = np.random.default_rng(5)
    for _ in range(300):
        tx = transmit(sched, s, rng)
        out = decide(tx, sched, s)
        Q = tx.node_matrix(sched.l, s.k)
        assert out.success == (rank(Q) == s.k)
        assert out.success == all(r == s.alpha for r in chunk_ranks(Q, tx.chunk[sched.l], s))
        seen.add(out.success)
    assert seen == {True, False}


@pytest.mark.parametrize("scheme", [("dense", 48), ("CC", 48, 16), ("OCC", 48, 16, 2)])
def test_payload_mode_decodes_originals(scheme):
    s = make_scheme(*scheme)
    sched = generate_schedule("aiao", 2, 60)
    rng = np.random.default_rng(6)
    for _ in range(40):
        out = run_trial(sched, s, rng, payload_len=32)
        assert out.payload_verified is True


def test_single_link_dense_code_follows_random_matrix_law():
    # one link: the sink sees n source packets, nonzero and otherwise uniform
    k, n, trials = 32, 34, 6000
    s = make_scheme("dense", k)
    sched = generate_schedule("oioo", 1, n)
    rng = np.random.default_rng(9)
    ok = sum(run_trial(sched, s, rng).success for _ in range(trials))
    assert abs(ok / trials - exact_full_rank_prob(n, k)) < 0.025


def test_evaluate_counts():
    outs = [TrialOutcome(True, frozenset(range(4)), 5), TrialOutcome(False, frozenset({0, 1}), 5),
            TrialOutcome(False, frozenset(), 5), TrialOutcome(True, frozenset(range(4)), 5)]
    ev = evaluate(outs, 4)
    assert (ev.trials, ev.failures, ev.mer) == (4, 2, 0.5)
    assert ev.per == pytest.approx((0 + 0.5 + 1 + 0) / 4)
    assert ev.mer_ci[0] < 0.5 < ev.mer_ci[1]
    with pytest.raises(ValueError):
        evaluate([], 4)
