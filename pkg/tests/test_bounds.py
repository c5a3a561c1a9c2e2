import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from occsim.bounds import (
    cc_capacity_bound,
    cc_kmax,
    dense_kmax,
    density_loss_bound,
    erasure_kmax,
    oioo_capacity_terms,
    rank_tail_bounds,
)
from occsim.network import ScheduleKind, generate_schedule, omega_capacity, random_chunk_assignment

OIOO = ScheduleKind.ONE_IN_ONE_OUT
AIAO = ScheduleKind.ALL_IN_ALL_OUT


def test_dense_kmax_values():
    assert dense_kmax(1024, 4, 0.01, OIOO) == pytest.approx(
        1024 - 4 * math.log2(409600) - math.log2(100) - 5)
    assert dense_kmax(1024, 4, 0.01, OIOO) == pytest.approx(937.78, abs=0.01)
    assert dense_kmax(1024, 4, 0.01, AIAO) == pytest.approx(
        1024 - 4 * math.log2(400) - math.log2(100) - 5)
    for n in (16, 100, 1000):
        assert dense_kmax(n, 1, 1.0, OIOO) == pytest.approx(n - math.log2(n) - 2)


def test_erasure_kmax_values():
    assert erasure_kmax(128, 2**-10) == 118
    assert erasure_kmax(77, 1.0) == 77
    assert erasure_kmax(100, 0.01) == pytest.approx(93.36, abs=0.01)
    with pytest.raises(ValueError):
        erasure_kmax(10, 0)


def test_density_loss_values():
    assert density_loss_bound(256, 4, 0.1, OIOO) == pytest.approx(202.7, abs=0.05)
    assert density_loss_bound(256, 4, 0.1, AIAO) == pytest.approx(234.7, abs=0.05)
    assert density_loss_bound(64, 1, 0.5, OIOO) == pytest.approx(64 - math.log2(128))


def test_all_in_all_out_capacity_example():
    b = cc_capacity_bound(1024, 8, 4, 0.01, AIAO)
    delta = math.sqrt(0.015625 * math.log(3200))
    assert delta == pytest.approx(0.35512, abs=1e-5)
    assert b.value == pytest.approx(82.54, abs=0.01) and b.valid
    assert not cc_capacity_bound(64, 32, 4, 0.01, AIAO).valid


def test_single_chunk_capacity_approaches_n():
    n = 10**6
    assert cc_capacity_bound(n, 1, 1, 1e-6, AIAO).value > 0.99 * n


def test_one_in_one_out_instantiation():
    t = oioo_capacity_terms(1024, 8, 4, 0.01)
    assert t["b"] == 3
    assert t["c"] == pytest.approx(math.sqrt(2 * math.log(2 / (0.01 / 96))))
    # at desk scale the bucket losses swamp the bound
    assert cc_capacity_bound(1024, 8, 4, 0.01, OIOO).value < 0
    # with a small enough c against sqrt(mu) the bound is vacuous
    assert cc_capacity_bound(64, 8, 2, 0.01, OIOO) == (-math.inf, False)
    big = cc_capacity_bound(1e9, 1, 2, 0.1, OIOO)
    assert big.valid and 0 < big.value <= 1e9


@given(st.floats(100, 1e7), st.integers(1, 16), st.integers(1, 6), st.floats(1e-4, 0.5),
       st.sampled_from(list(ScheduleKind)))
def test_capacity_bound_never_exceeds_fair_share(n, q, l, eps, kind):
    b = cc_capacity_bound(n, q, l, eps, kind)
    assert b.value <= n / q + 1e-9


@given(st.floats(100, 1e6), st.integers(1, 6), st.floats(1e-4, 1.0), st.sampled_from(list(ScheduleKind)))
def test_dense_kmax_monotone(n, l, eps, kind):
    assert dense_kmax(n + 1, l, eps, kind) > dense_kmax(n, l, eps, kind)
    assert dense_kmax(n, l + 1, eps, kind) < dense_kmax(n, l, eps, kind)


@given(st.floats(500, 1e6), st.integers(1, 32), st.integers(1, 6), st.floats(1e-4, 0.5))
def test_aiao_capacity_decreasing_in_q(n, q, l, eps):
    assert cc_capacity_bound(n, q + 1, l, eps, AIAO).value < cc_capacity_bound(n, q, l, eps, AIAO).value


@given(st.floats(100, 1e6), st.integers(1, 16), st.integers(1, 6), st.floats(1e-4, 1.0),
       st.sampled_from(list(ScheduleKind)))
def test_cc_kmax_at_most_n(n, q, l, eps, kind):
    assert cc_kmax(n, q, l, eps, kind).value <= n


def test_cc_kmax_uses_half_epsilon_throughout():
    n, q, l, eps = 1024, 8, 4, 0.01
    phi = cc_capacity_bound(n, q, l, eps / 2, AIAO).value
    expected = q * phi - q * l * math.log2(l * q / (eps / 2)) - q * math.log2(q / (eps / 2)) - q * l - q
    assert cc_kmax(n, q, l, eps, AIAO).value == pytest.approx(expected)
    assert cc_kmax(n, q, l, eps, AIAO).value == pytest.approx(115.31, abs=0.01)
    assert not cc_kmax(1024, 8, 4, 0.01, OIOO).valid or cc_kmax(1024, 8, 4, 0.01, OIOO).value < 0


def test_rank_tail_bounds():
    t = rank_tail_bounds(16, 4)
    assert t.lemma3 == 0.375 and t.lemma7 == 1 / 16 and t.lemma6 is None
    assert rank_tail_bounds(16, 4, k=16).lemma6 == 1
    assert rank_tail_bounds(16, 4, k=10).lemma6 == 2**-6
    for bad in [dict(d=16, gamma=16), dict(d=16, gamma=-1), dict(d=16, gamma=2, k=17), dict(d=16, gamma=2, n=8)]:
        with pytest.raises(ValueError):
            rank_tail_bounds(**bad)


def test_all_in_all_out_bound_holds_for_measured_capacity():
    n, q, l, eps = 512, 4, 3, 0.05
    bound = cc_capacity_bound(n, q, l, eps, AIAO)
    assert bound.valid
    rng = np.random.default_rng(0)
    sched = generate_schedule(AIAO, l, n)
    hits = 0
    for _ in range(200):
        chunks = random_chunk_assignment(sched, q, rng)
        hits += min(omega_capacity(sched, chunks, w) for w in range(q)) >= bound.value
    assert hits >= (1 - eps) * 200
