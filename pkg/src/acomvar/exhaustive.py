"""Complete enumeration of n-point subsets of the full factorial.

Each subset is screened in floating point (batched Schur complements of the
main-effect block) and every subset that survives the screen is re-derived in
exact integer arithmetic, which alone decides rank, CV membership and the CV
value.  Floating point only ever *rejects* a subset when every estimated
determinant lies within ``INT_SLACK`` of zero; anything ambiguous goes down
the exact path.
"""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .design import Design, DesignProblem, enumerate_full_factorial, enumerate_models, enumerate_terms, main_effect_block, term_block
from .exact import bareiss_det

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 20_000_000
CHUNK = 50_000
INT_SLACK = 0.05
# float determinants of integer Gram matrices stay exact-to-rounding below this
FLOAT_SAFE = 2.0**45


class BudgetExceeded(RuntimeError):
    def __init__(self, total: int, budget: int):
        super().__init__(f"C(N, n) = {total:,} subsets exceeds the budget of {budget:,}")
        self.total = total
        self.budget = budget


def budget_from_env(default: int = DEFAULT_BUDGET) -> int:
    raw = os.environ.get("ACOMVAR_BUDGET")
    return int(float(raw)) if raw else default


@dataclass
class ExhaustiveReport:
    problem: DesignProblem
    total_subsets: int
    rank_ok: int = 0
    cv: int = 0
    groups: dict[Fraction, int] = field(default_factory=dict)
    # value -> (lexicographic rank, candidate-point indices) of the first design seen
    witnesses: dict[Fraction, tuple[int, tuple[int, ...]]] = field(default_factory=dict)

    @property
    def non_cv(self) -> int:
        return self.rank_ok - self.cv

    def witness_design(self, value: Fraction) -> Design:
        points = enumerate_full_factorial(self.problem)
        _, idx = self.witnesses[value]
        return Design(points[list(idx)], self.problem.names)

    def merge(self, other: ExhaustiveReport) -> ExhaustiveReport:
        out = ExhaustiveReport(self.problem, self.total_subsets, self.rank_ok + other.rank_ok, self.cv + other.cv)
        out.groups = dict(self.groups)
        for v, c in other.groups.items():
            out.groups[v] = out.groups.get(v, 0) + c
        out.witnesses = dict(self.witnesses)
        for v, w in other.witnesses.items():
            if v not in out.witnesses or w[0] < out.witnesses[v][0]:
                out.witnesses[v] = w
        return out

    def to_dict(self) -> dict:
        opt = optcv(self)
        return {
            "total": self.total_subsets,
            "rank_ok": self.rank_ok,
            "cv": self.cv,
            "groups": [
                {"value_exact": f"{v.numerator}/{v.denominator}", "value": round(float(v), 4), "count": c}
                for v, c in sorted(self.groups.items())
            ],
            "optcv": None
            if opt is None
            else {"value_exact": f"{opt[0].numerator}/{opt[0].denominator}", "value": round(float(opt[0]), 4)},
        }


def optcv(report: ExhaustiveReport):
    """Smallest common-variance value and a witness design, or ``None``."""
    if report.cv == 0 or not report.groups:
        return None
    value = min(report.groups)
    return value, report.witness_design(value)


# ---------------------------------------------------------------------------
# lexicographic combination blocks


@lru_cache(maxsize=256)
def _all_combinations(size: int, r: int) -> np.ndarray:
    if r == 0:
        return np.zeros((1, 0), dtype=np.int16)
    flat = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(size), r)), dtype=np.int16)
    return flat.reshape(-1, r)


def combination_block(N: int, n: int, start: int, stop: int) -> np.ndarray:
    """Rows ``start..stop-1`` of the lexicographic list of n-subsets of ``range(N)``."""
    out: list[np.ndarray] = []

    def emit(lo: int, r: int, start: int, stop: int, prefix: list[int]):
        if r == 0:
            out.append(np.array([prefix], dtype=np.int16).reshape(1, -1))
            return
        offset = 0
        for a in range(lo, N - r + 1):
            cnt = math.comb(N - a - 1, r - 1)
            s0, s1 = offset, offset + cnt
            offset = s1
            if s1 <= start:
                continue
            if s0 >= stop:
                break
            if start <= s0 and s1 <= stop:
                tail = _all_combinations(N - a - 1, r - 1) + (a + 1)
                head = np.broadcast_to(np.array(prefix + [a], dtype=np.int16), (tail.shape[0], len(prefix) + 1))
                out.append(np.hstack([head, tail]).astype(np.int16))
            else:
                emit(a + 1, r - 1, max(start - s0, 0), min(stop, s1) - s0, prefix + [a])

    emit(0, n, start, stop, [])
    if not out:
        return np.empty((0, n), dtype=np.int16)
    return np.vstack(out)


def unrank_combination(rank: int, N: int, n: int) -> tuple[int, ...]:
    return tuple(int(v) for v in combination_block(N, n, rank, rank + 1)[0])


# ---------------------------------------------------------------------------
# census


@lru_cache(maxsize=16)
def _tables(problem: DesignProblem):
    points = enumerate_full_factorial(problem)
    x1 = main_effect_block(points, problem)
    x2 = term_block(points, problem)
    terms = enumerate_terms(problem)
    pos = {t: j for j, t in enumerate(terms)}
    idx = np.array([[pos[t] for t in mdl.interactions] for mdl in enumerate_models(problem)], dtype=int)
    return x1, x2, idx


def _screen(c: np.ndarray, problem: DesignProblem) -> np.ndarray:
    """Float screen: mask of subsets that may have every model nonsingular."""
    x1t, x2t, idx = _tables(problem)
    X1 = x1t[c]
    X2 = x2t[c]
    G11 = np.einsum("bni,bnj->bij", X1, X1)
    G12 = np.einsum("bni,bnj->bij", X1, X2)
    G22 = np.einsum("bni,bnj->bij", X2, X2)
    d11 = np.linalg.det(G11)
    alive = np.abs(d11) > INT_SLACK
    # unsafe magnitudes go straight to the exact path
    forced = np.abs(d11) > FLOAT_SAFE
    safe_G11 = np.where(alive[:, None, None], G11, np.eye(G11.shape[1]))
    W = G22 - np.swapaxes(G12, 1, 2) @ np.linalg.solve(safe_G11, G12)
    k = idx.shape[1]
    if k == 1:
        est = d11[:, None] * W[:, idx[:, 0], idx[:, 0]]
    else:
        sub = W[:, idx[:, :, None], idx[:, None, :]]
        est = d11[:, None] * np.linalg.det(sub)
    near_zero = np.abs(est) <= INT_SLACK
    ambiguous = np.abs(est - np.rint(est)) > INT_SLACK
    maybe = alive & ~(near_zero & ~ambiguous).any(axis=1)
    return maybe | (alive & forced)


def _exact(c: np.ndarray, problem: DesignProblem):
    """Exact ``(d1, dets)`` for each subset; dets has shape ``(B, s)``."""
    x1t, x2t, idx = _tables(problem)
    X = np.concatenate([x1t, x2t], axis=1).astype(np.int64)[c]
    G = np.einsum("bni,bnj->bij", X, X)
    p1 = x1t.shape[1]
    s, k = idx.shape
    cols = np.concatenate([np.broadcast_to(np.arange(p1), (s, p1)), p1 + idx], axis=1)
    sub = G[:, cols[:, :, None], cols[:, None, :]]
    d1 = bareiss_det(G[:, :p1, :p1])
    dets = bareiss_det(sub)
    return d1, dets


def _census_range(problem: DesignProblem, start: int, stop: int, chunk: int = CHUNK) -> ExhaustiveReport:
    N, n = problem.num_candidates, problem.n
    rep = ExhaustiveReport(problem, math.comb(N, n))
    for lo in range(start, stop, chunk):
        hi = min(lo + chunk, stop)
        c = combination_block(N, n, lo, hi)
        maybe = np.flatnonzero(_screen(c, problem))
        if maybe.size == 0:
            continue
        d1, dets = _exact(c[maybe], problem)
        for j, (a, row) in enumerate(zip(d1, dets)):
            if any(d == 0 for d in row):
                continue
            rep.rank_ok += 1
            first = row[0]
            if all(d == first for d in row):
                rep.cv += 1
                v = Fraction(int(a), int(first))
                rep.groups[v] = rep.groups.get(v, 0) + 1
                if v not in rep.witnesses:
                    rank = lo + int(maybe[j])
                    rep.witnesses[v] = (rank, tuple(int(i) for i in c[maybe[j]]))
    return rep


def _census_task(args):
    problem, start, stop = args
    return _census_range(problem, start, stop)


def split_range(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total)) if total else 1
    bounds = [total * i // parts for i in range(parts + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(parts)]


def exhaustive_search(
    problem: DesignProblem,
    workers: int = 1,
    budget: int | None = None,
    parts: int | None = None,
) -> ExhaustiveReport:
    """Census of every n-subset of the candidate points.

    ``parts`` splits the lexicographic index range into that many chunks
    (default: ``workers``); the merged report does not depend on either.
    """
    budget = budget_from_env() if budget is None else budget
    N = problem.num_candidates
    total = math.comb(N, problem.n)
    if total > budget:
        raise BudgetExceeded(total, budget)
    ranges = split_range(total, parts or workers)
    tasks = [(problem, a, b) for a, b in ranges]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_census_task, tasks))
    else:
        partials = [_census_task(t) for t in tasks]
    report = ExhaustiveReport(problem, total)
    for part in partials:
        report = report.merge(part)
    log.info("census %s: %d rank-ok, %d CV", problem, report.rank_ok, report.cv)
    return report
