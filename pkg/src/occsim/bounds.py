"""Closed-form performance bounds for dense codes and chunked codes.

``log`` is base 2 and ``ln`` natural throughout.  Evaluators are total:
they may return negative or non-integer values, and feasibility is the
caller's business.
"""

from __future__ import annotations

import math
from typing import NamedTuple

from .network import ScheduleKind


class Bound(NamedTuple):
    value: float
    valid: bool


class RankTailBounds(NamedTuple):
    lemma3: float
    lemma6: float | None
    lemma7: float


def _check_eps(epsilon: float) -> None:
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")


def dense_kmax(n: float, l: int, epsilon: float, kind) -> float:
    """Largest k for which a dense code fails w.p. at most ``epsilon``."""
    _check_eps(epsilon)
    kind = ScheduleKind.parse(kind)
    inner = n * l / epsilon if kind is ScheduleKind.ONE_IN_ONE_OUT else l / epsilon
    return n - l * math.log2(inner) - math.log2(1 / epsilon) - l - 1


def erasure_kmax(n: float, epsilon: float) -> float:
    """Single erasure channel: ``n - log(1/epsilon)``."""
    _check_eps(epsilon)
    return n - math.log2(1 / epsilon)


def density_loss_bound(n: float, l: int, epsilon: float, kind) -> float:
    """Lower bound on the number of dense rows of the sink's decoding matrix.

    With ``l = 1`` there is no interior node and the bound is merely loose.
    """
    _check_eps(epsilon)
    kind = ScheduleKind.parse(kind)
    inner = n * l / epsilon if kind is ScheduleKind.ONE_IN_ONE_OUT else l / epsilon
    return n - l * math.log2(inner)


def rank_tail_bounds(d: int, gamma: int, k: int | None = None, n: int | None = None) -> RankTailBounds:
    """Upper bounds on rank-deficiency probabilities of transfer matrices.

    lemma3: ``Pr[r(T) < d - gamma]`` for the one-in-one-out zero pattern.
    lemma6: ``Pr[r(M) < k]`` for a dense d x k matrix, i.e. ``2**(k - d)``.
    lemma7: ``Pr[r(T) < d - gamma]`` for a dense n x d matrix.
    """
    if d < 1 or not 0 <= gamma <= d - 1:
        raise ValueError(f"gamma must lie in 0..{d - 1}")
    if n is not None and d > n:
        raise ValueError(f"d = {d} exceeds n = {n}")
    lemma6 = None
    if k is not None:
        if not 0 <= k <= d:
            raise ValueError(f"k must lie in 0..{d}")
        lemma6 = 2.0 ** (k - d)
    return RankTailBounds((d - gamma) * 2.0 ** -(gamma + 1), lemma6, 2.0 ** -gamma)


def oioo_capacity_terms(n: float, q: int, l: int, epsilon: float) -> dict[str, float]:
    """Bucket count ``b``, Chernoff width ``c`` and bucket means used by the
    one-in-one-out instantiation (exposed for inspection)."""
    b = math.ceil((n / (q * math.log(l * n / epsilon))) ** (1 / 3))
    eps_bucket = epsilon / (l * b * q)
    c = math.sqrt(2 * math.log(2 / eps_bucket))
    mu = n / (b * q)
    return {"b": b, "c": c, "mu": mu, "mu_lo": mu - c * math.sqrt(mu), "mu_hi": mu + c * math.sqrt(mu)}


def cc_capacity_bound(n: float, q: int, l: int, epsilon: float, kind) -> Bound:
    """Instantiated lower bound on the capacity of one chunk's sub-schedule.

    All-in-all-out: ``(1 - delta) n / q`` with
    ``delta = sqrt(2 (q/n) ln(l q / epsilon))``; valid when ``delta < 1``.

    One-in-one-out: bucket argument with ``b`` buckets per node, each
    bucket holding between ``mu - c sqrt(mu)`` and ``mu + c sqrt(mu)``
    packets of the chunk; an interior node loses its last bucket plus a
    ``4c / (sqrt(mu) - c)`` share of each other bucket.  Invalid (value
    ``-inf``) when ``sqrt(mu) <= c``.  This is an instantiated bound, not
    the asymptotic expression itself.
    """
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if q < 1 or n <= 0 or l < 1:
        raise ValueError("need n > 0, q >= 1, l >= 1")
    kind = ScheduleKind.parse(kind)
    if kind is ScheduleKind.ALL_IN_ALL_OUT:
        delta = math.sqrt(2 * (q / n) * math.log(l * q / epsilon))
        return Bound((1 - delta) * n / q, delta < 1)
    t = oioo_capacity_terms(n, q, l, epsilon)
    b, c, mu = t["b"], t["c"], t["mu"]
    if math.sqrt(mu) <= c:
        return Bound(-math.inf, False)
    loss = (b - 1) * t["mu_hi"] * 4 * c / (math.sqrt(mu) - c) + t["mu_hi"]
    return Bound(b * t["mu_lo"] - (l - 1) * loss, True)


def cc_kmax(n: float, q: int, l: int, epsilon: float, kind) -> Bound:
    """Largest k for a CC with q chunks at failure probability ``epsilon``.

    Capacity bound and log terms are both taken at ``epsilon / 2``.
    """
    _check_eps(epsilon)
    kind = ScheduleKind.parse(kind)
    eps_half = epsilon / 2
    phi = cc_capacity_bound(n, q, l, eps_half, kind)
    inner = n * l / eps_half if kind is ScheduleKind.ONE_IN_ONE_OUT else l * q / eps_half
    value = q * phi.value - q * l * math.log2(inner) - q * math.log2(q / eps_half) - q * l - q
    return Bound(value, phi.valid)
