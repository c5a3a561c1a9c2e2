"""Experiment execution: seeded trial blocks, stopping rule, CSV rows.

Trial ``t`` of a cell always draws from ``trial_rng(seed, cell, t)``, and
blocks are merged in trial order before the stopping rule is applied, so
results depend only on the seed and the config, never on ``workers``.
"""

from __future__ import annotations

import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import bounds as B
from ..banded import exact_full_rank_prob, full_rank_frequency
from ..codes import run_trial
from ..network import (
    DeliveryOrder,
    ScheduleKind,
    generate_schedule,
    min_link_count,
    omega_capacity,
    random_chunk_assignment,
)
from ..stats import cell_id, mean_and_stderr, trial_rng, wilson_interval
from .config import BoundsConfig, CapacityConfig, RankConfig, SimulateConfig

BLOCK = 500

SIMULATE_COLUMNS = (
    "kind,l,k,n,lambda,scheme,alpha,tau,gamma,q,trials,failures,"
    "mer,mer_lo,mer_hi,per_mean,per_se,wasted,capped"
).split(",")
RANK_COLUMNS = "k,n,alpha,gamma,regularity,symmetry,trials,full_rank,freq,ci_lo,ci_hi,exact_random".split(",")
BOUNDS_COLUMNS = "name,kind,n,l,q,epsilon,d,gamma,value,valid".split(",")
CAPACITY_COLUMNS = "kind,l,n,q,epsilon,schedule,chunk,measured,min_link,bound,bound_valid".split(",")


def fmt(value) -> str:
    """CSV cell text: 6 significant digits for reals, plain ints, empty for None."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) and math.isinf(value):
        return "-inf" if value < 0 else "inf"
    return f"{float(value):.6g}"


def write_csv(rows: list[dict], columns: list[str], out=None) -> str:
    """Render rows as CSV; also writes to ``out`` (a path) when given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) if not isinstance(r.get(c), str) else r[c] for c in columns])
    text = buf.getvalue()
    if out:
        with open(out, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    return text


@contextmanager
def _mapper(workers: int):
    """Order-preserving map, in-process or over a process pool."""
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool.map


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimCell:
    kind: ScheduleKind
    l: int
    k: int
    n: int
    lam: float
    scheme: object  # SchemeChoice
    delivery: DeliveryOrder
    payload_len: int
    allow_empty: bool

    @property
    def id(self) -> int:
        s = self.scheme
        return cell_id("simulate", self.kind.value, self.l, self.k, self.n, s.label, s.alpha, s.tau,
                       self.delivery.value, self.payload_len, int(self.allow_empty))


@lru_cache(maxsize=8)
def _inorder_schedule(kind, l, n):
    return generate_schedule(kind, l, n)


def _sim_block(args):
    """Outcomes of trials ``start .. start+count-1``: (failed, unrecovered, wasted)."""
    cell, seed, start, count = args
    scheme = cell.scheme.build(cell.k)
    cid = cell.id
    failed = np.zeros(count, dtype=bool)
    lost = np.zeros(count, dtype=np.int32)
    wasted = np.zeros(count, dtype=np.int64)
    for i in range(count):
        rng = trial_rng(seed, cid, start + i)
        if cell.delivery is DeliveryOrder.INORDER:
            sched = _inorder_schedule(cell.kind, cell.l, cell.n)
        else:
            sched = generate_schedule(cell.kind, cell.l, cell.n, cell.delivery, rng)
        out = run_trial(sched, scheme, rng, cell.payload_len or None, cell.allow_empty)
        if out.payload_verified is False:
            raise RuntimeError(f"decoded payload mismatch in trial {start + i} of cell {cell}")
        failed[i] = not out.success
        lost[i] = cell.k - len(out.recovered)
        wasted[i] = out.wasted
    return failed, lost, wasted


def run_cell(cell: SimCell, cfg: SimulateConfig, mapper=map) -> dict:
    """Trials of one cell until the failure target, the trial cap or the fixed count."""
    fixed = cfg.trials is not None
    limit = cfg.trials if fixed else cfg.max_trials
    batch = max(1, cfg.workers) * 2
    failed, lost, wasted = [], [], []
    done = failures = 0
    stop = False
    while done < limit and not stop:
        jobs = []
        start = done
        for _ in range(batch):
            if start >= limit:
                break
            c = min(BLOCK, limit - start)
            jobs.append((cell, cfg.seed, start, c))
            start += c
        for f, lo, wa in mapper(_sim_block, jobs):
            if stop:
                continue
            if not fixed:
                cum = failures + np.cumsum(f)
                hit = np.flatnonzero(cum >= cfg.target_failures)
                if hit.size:
                    cut = hit[0] + 1
                    f, lo, wa = f[:cut], lo[:cut], wa[:cut]
                    stop = True
            failed.append(f)
            lost.append(lo)
            wasted.append(wa)
            failures += int(f.sum())
            done += f.size
    f = np.concatenate(failed)
    per, per_se = mean_and_stderr(np.concatenate(lost) / cell.k)
    lo_ci, hi_ci = wilson_interval(failures, done)
    scheme = cell.scheme.build(cell.k)
    return {
        "kind": cell.kind.value, "l": cell.l, "k": cell.k, "n": cell.n, "lambda": cell.lam,
        "scheme": scheme.variant.value, "alpha": scheme.alpha, "tau": scheme.tau, "gamma": scheme.gamma,
        "q": scheme.q, "trials": int(f.size), "failures": failures, "mer": failures / f.size,
        "mer_lo": lo_ci, "mer_hi": hi_ci, "per_mean": per, "per_se": per_se,
        "wasted": int(np.concatenate(wasted).sum()),
        "capped": (not fixed) and failures < cfg.target_failures,
    }


def simulate_cells(cfg: SimulateConfig) -> list[SimCell]:
    return [
        SimCell(kind, cfg.l, cfg.k, cfg.n_for(lam), lam, s, cfg.delivery, cfg.payload_len, cfg.allow_empty_chunk)
        for kind in cfg.kinds
        for s in cfg.schemes
        for lam in cfg.lambdas
    ]


def run_simulate(cfg: SimulateConfig, progress=None) -> list[dict]:
    rows = []
    with _mapper(cfg.workers) as mapper:
        for cell in simulate_cells(cfg):
            rows.append(run_cell(cell, cfg, mapper))
            if progress:
                progress(rows[-1])
    return rows


# ---------------------------------------------------------------------------
# rank experiment
# ---------------------------------------------------------------------------


def run_rank_experiment(cfg: RankConfig, progress=None) -> list[dict]:
    rows = []
    for spec in cfg.cells():
        seed = cell_id("rank", cfg.seed, spec.k, spec.n_rows, spec.alpha, spec.gamma,
                       spec.regularity.value, spec.symmetry.value)
        res = full_rank_frequency(spec, cfg.trials, seed=seed, workers=cfg.workers)
        exact = exact_full_rank_prob(spec.n_rows, spec.k) if spec.n_rows >= spec.k else 0.0
        rows.append({
            "k": spec.k, "n": spec.n_rows, "alpha": spec.alpha, "gamma": spec.gamma,
            "regularity": spec.regularity.value, "symmetry": spec.symmetry.value,
            "trials": res.trials, "full_rank": res.full_rank, "freq": res.freq,
            "ci_lo": res.ci[0], "ci_hi": res.ci[1], "exact_random": exact,
        })
        if progress:
            progress(rows[-1])
    return rows


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def run_bounds(cfg: BoundsConfig) -> list[dict]:
    rows = []

    def add(name, value, valid=True, **params):
        rows.append({"name": name, "value": value, "valid": valid, **params})

    for name in cfg.bounds:
        if name == "rank_tail":
            for d in cfg.ds:
                for g in cfg.gammas:
                    t = B.rank_tail_bounds(d, g)
                    add("rank_tail_lemma3", t.lemma3, d=d, gamma=g)
                    add("rank_tail_lemma7", t.lemma7, d=d, gamma=g)
            continue
        for eps in cfg.epsilons:
            for n in cfg.ns:
                if name == "erasure_kmax":
                    add(name, B.erasure_kmax(n, eps), n=n, epsilon=eps)
                    continue
                for kind in cfg.kinds:
                    for l in cfg.ls:
                        p = {"kind": kind.value, "n": n, "l": l, "epsilon": eps}
                        if name == "dense_kmax":
                            add(name, B.dense_kmax(n, l, eps, kind), **p)
                        elif name == "density_loss":
                            add(name, B.density_loss_bound(n, l, eps, kind), **p)
                        else:
                            fn = B.cc_capacity_bound if name == "cc_capacity" else B.cc_kmax
                            for q in cfg.qs:
                                v = fn(n, q, l, eps, kind)
                                add(name, v.value, v.valid, q=q, **p)
    return rows


# ---------------------------------------------------------------------------
# capacity
# ---------------------------------------------------------------------------


def _capacity_block(args):
    cfg, kind, start, count = args
    cid = cell_id("capacity", kind.value, cfg.l, cfg.n, cfg.q, cfg.delivery.value)
    out = []
    for t in range(start, start + count):
        rng = trial_rng(cfg.seed, cid, t)
        sched = generate_schedule(kind, cfg.l, cfg.n, cfg.delivery, rng)
        assign = random_chunk_assignment(sched, cfg.q, rng)
        for w in range(cfg.q):
            out.append((t, w, omega_capacity(sched, assign, w, method="maxflow"), min_link_count(sched, assign, w)))
    return out


@dataclass(frozen=True)
class CapacityCheck:
    kind: ScheduleKind
    schedules: int
    covered: int  # schedules whose every chunk reaches the bound
    min_count_mismatches: int
    bound_valid: bool
    passed: bool


def run_capacity(cfg: CapacityConfig, progress=None) -> tuple[list[dict], list[CapacityCheck]]:
    rows, checks = [], []
    with _mapper(cfg.workers) as mapper:
        for kind in cfg.kinds:
            bound = B.cc_capacity_bound(cfg.n, cfg.q, cfg.l, cfg.epsilon, kind)
            jobs = [(cfg, kind, s, min(100, cfg.trials - s)) for s in range(0, cfg.trials, 100)]
            per_schedule: dict[int, int] = {}
            mismatches = 0
            for block in mapper(_capacity_block, jobs):
                for t, w, measured, minc in block:
                    rows.append({
                        "kind": kind.value, "l": cfg.l, "n": cfg.n, "q": cfg.q, "epsilon": cfg.epsilon,
                        "schedule": t, "chunk": w, "measured": measured, "min_link": minc,
                        "bound": bound.value, "bound_valid": bound.valid,
                    })
                    per_schedule[t] = min(per_schedule.get(t, measured), measured)
                    if kind is ScheduleKind.ALL_IN_ALL_OUT and measured != minc:
                        mismatches += 1
            covered = sum(m >= bound.value for m in per_schedule.values())
            ok = mismatches == 0 and covered >= (1 - cfg.epsilon) * cfg.trials
            checks.append(CapacityCheck(kind, cfg.trials, covered, mismatches, bound.valid, ok))
            if progress:
                progress(checks[-1])
    return rows, checks


def eprint(*args):
    print(*args, file=sys.stderr)
