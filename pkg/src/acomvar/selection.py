"""Model-identification simulation with the adaptive lasso.

A true model is a small set of active main effects and two-factor
interactions on randomly chosen factors of a design.  Responses are simulated
from the design, an adaptive lasso tuned by extended BIC is fitted over every main
effect and pairwise interaction, and a fit counts as a hit when its support is
exactly the true term set.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import re
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .design import Design

log = logging.getLogger(__name__)

SIGMAS = (0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5)
BIG = (1.5, 2.5)
SMALL = (0.1, 0.3)

# (row, shape, sizes) of the published result tables
TABLE_SHAPES = (
    (1, "F1", "b"),
    (2, "F1", "s"),
    (3, "F1+F2", "b+b"),
    (4, "F1+F2", "b+s"),
    (5, "F1+F2", "s+s"),
    (6, "F1+F1F2", "b+b"),
    (7, "F1+F1F2", "b+s"),
    (8, "F1+F1F2", "s+s"),
    (9, "F1+F2+F1F2", "b+b+b"),
    (10, "F1+F2+F1F2", "b+b+s"),
    (11, "F1+F2+F1F2", "b+s+b"),
    (12, "F1+F2+F1F2", "b+s+s"),
    (13, "F1+F2+F1F2", "s+s+s"),
    (14, "F1+F2+F3", "b+b+b"),
    (15, "F1+F2+F3", "b+b+s"),
    (16, "F1+F2+F3", "b+s+s"),
    (17, "F1+F2+F3", "s+s+s"),
    (18, "F1+F2+F1F3", "b+b+b"),
    (19, "F1+F2+F1F3", "b+b+s"),
    (20, "F1+F2+F1F3", "b+s+b"),
    (21, "F1+F2+F1F3", "b+s+s"),
    (22, "F1+F2+F1F3", "s+b+s"),
    (23, "F1+F2+F1F3", "s+s+s"),
    (24, "F1+F2+F3+F1F3", "b+b+b+b"),
    (25, "F1+F2+F3+F1F3", "b+b+s+s"),
    (26, "F1+F2+F3+F1F3", "b+s+s+b"),
    (27, "F1+F2+F3+F1F3", "s+s+s+s"),
    (28, "F1+F2+F3+F1F3+F2F3", "b+b+b+b+b"),
    (29, "F1+F2+F3+F1F3+F2F3", "b+b+s+s+s"),
    (30, "F1+F2+F3+F1F3+F2F3", "b+s+s+b+b"),
    (31, "F1+F2+F3+F1F3+F2F3", "s+s+s+s+s"),
    (32, "F1+F2+F3+F4+F5+F1F2", "b+b+b+b+b+b"),
    (33, "F1+F2+F3+F4+F5+F1F2", "b+b+s+s+s+s"),
    (34, "F1+F2+F3+F4+F5+F1F2", "b+s+s+b+b+b"),
    (35, "F1+F2+F3+F4+F5+F1F2", "s+s+s+s+s+s"),
)

_TERM = re.compile(r"^F(\d+)(?:F(\d+))?$")


# ---------------------------------------------------------------------------
# model shapes and true models


def parse_shape(shape: str, sizes: str) -> list[tuple[tuple[int, ...], str]]:
    """``"F1+F1F2", "b+s"`` -> ``[((0,), "b"), ((0, 1), "s")]`` (0-based slots)."""
    terms = [t.strip() for t in shape.split("+")]
    tags = [t.strip() for t in sizes.split("+")]
    if len(terms) != len(tags):
        raise ValueError(f"shape {shape!r} has {len(terms)} terms but sizes {sizes!r} has {len(tags)}")
    out = []
    for term, tag in zip(terms, tags):
        mt = _TERM.match(term)
        if not mt:
            raise ValueError(f"cannot parse model term {term!r}")
        if tag not in ("b", "s"):
            raise ValueError(f"size tags are 'b' or 's', got {tag!r}")
        slots = tuple(int(g) - 1 for g in mt.groups() if g is not None)
        if any(s < 0 for s in slots) or (len(slots) == 2 and slots[0] == slots[1]):
            raise ValueError(f"bad model term {term!r}")
        out.append((tuple(sorted(slots)), tag))
    return out


@dataclass
class TrueModel:
    active_factors: tuple[int, ...]
    # (design factor indices, coefficient, size tag); one entry for a main effect, two for an interaction
    terms: list[tuple[tuple[int, ...], float, str]]
    sigma: float

    @property
    def main_effects(self):
        return [t for t in self.terms if len(t[0]) == 1]

    @property
    def interactions(self):
        return [t for t in self.terms if len(t[0]) == 2]

    def term_set(self) -> frozenset[tuple[int, ...]]:
        return frozenset(t[0] for t in self.terms)


def sample_true_model(design: Design, shape: str, sizes: str, rng: np.random.Generator, sigma: float = 0.0) -> TrueModel:
    parsed = parse_shape(shape, sizes)
    p = 1 + max(max(slots) for slots, _ in parsed)
    if p > design.m:
        raise ValueError(f"shape {shape!r} needs {p} factors but the design has {design.m}")
    active = tuple(int(f) for f in rng.choice(design.m, size=p, replace=False))
    terms = []
    for slots, tag in parsed:
        lo, hi = BIG if tag == "b" else SMALL
        factors = tuple(sorted(active[s] for s in slots))
        terms.append((factors, float(rng.uniform(lo, hi)), tag))
    return TrueModel(active, terms, sigma)


def candidate_terms(m: int) -> list[tuple[int, ...]]:
    """All main effects then all pairwise interactions of ``m`` factors."""
    return [(j,) for j in range(m)] + list(itertools.combinations(range(m), 2))


def candidate_matrix(design: Design, terms=None) -> np.ndarray:
    """Raw main-effect columns and their pairwise products (linear x linear for three levels)."""
    terms = candidate_terms(design.m) if terms is None else terms
    X = design.rows
    return np.column_stack([X[:, list(t)].prod(axis=1) for t in terms])


def generate_response(design: Design, model: TrueModel, rng: np.random.Generator) -> np.ndarray:
    mu = np.zeros(design.n)
    for factors, beta, _ in model.terms:
        mu += beta * design.rows[:, list(factors)].prod(axis=1)
    if model.sigma == 0:
        return mu
    return mu + model.sigma * rng.standard_normal(design.n)


# ---------------------------------------------------------------------------
# weighted lasso by coordinate descent


@numba.njit(cache=True)
def _cd(X, y, lam, w, beta, col_sq, tol, max_sweeps):
    n, p = X.shape
    r = y - X @ beta
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = beta[j]
            rho = 0.0
            for i in range(n):
                rho += X[i, j] * r[i]
            rho = rho / n + col_sq[j] * old
            thr = lam * w[j]
            if rho > thr:
                new = (rho - thr) / col_sq[j]
            elif rho < -thr:
                new = (rho + thr) / col_sq[j]
            else:
                new = 0.0
            if new != old:
                diff = new - old
                for i in range(n):
                    r[i] -= X[i, j] * diff
                beta[j] = new
                step = abs(diff) * math.sqrt(col_sq[j])
                if step > delta:
                    delta = step
        if delta < tol:
            break
    return beta


@numba.njit(cache=True)
def _path(X, y, lams, w, tol, max_sweeps):
    n, p = X.shape
    col_sq = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        col_sq[j] = s / n
    out = np.zeros((lams.shape[0], p))
    beta = np.zeros(p)
    for k in range(lams.shape[0]):
        beta = _cd(X, y, lams[k], w, beta, col_sq, tol, max_sweeps)
        out[k] = beta
    return out


def weighted_lasso(X, y, lam, weights=None, tol: float = 1e-12, max_sweeps: int = 100_000, beta0=None) -> np.ndarray:
    """Minimize ``||y - Xb||^2 / (2n) + lam * sum(w_j |b_j|)`` (no intercept)."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    p = X.shape[1]
    w = np.ones(p) if weights is None else np.asarray(weights, dtype=float)
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    col_sq = (X**2).sum(axis=0) / X.shape[0]
    return _cd(X, y, float(lam), w, beta, col_sq, tol, max_sweeps)


@dataclass
class LassoFit:
    coef: np.ndarray
    intercept: float
    lam: float
    criterion: float
    # standardized-scale problem actually solved, kept for diagnostics
    weights: np.ndarray = field(repr=False)
    lambdas: np.ndarray = field(repr=False)
    dropped: list[int] = field(default_factory=list)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(int(j) for j in np.flatnonzero(self.coef))


def initial_estimate(Xs: np.ndarray, yc: np.ndarray, ridge: float = 1e-3) -> np.ndarray:
    """OLS when it is well defined, otherwise ridge with ``ridge * trace(X'X)/p``."""
    n, p = Xs.shape
    G = Xs.T @ Xs
    if p < n and np.linalg.matrix_rank(Xs) == p:
        return np.linalg.solve(G, Xs.T @ yc)
    alpha = ridge * np.trace(G) / p
    return np.linalg.solve(G + alpha * np.eye(p), Xs.T @ yc)


def default_lambda_ratio(n: int, p: int) -> float:
    """Depth of the lambda grid below ``lambda_max``: four decades when n > p,
    a decade and a quarter otherwise (the tail of a deep grid interpolates)."""
    return 1e-4 if n > p else 10**-1.25


def information_criterion(rss, df, n: int, p: int, ebic_gamma: float = 1.0) -> np.ndarray:
    """``n log(RSS/n) + df log n + 2 gamma log C(p, df)``; gamma = 0 is plain BIC."""
    rss = np.asarray(rss, dtype=float)
    df = np.asarray(df)
    crit = n * np.log(rss / n) + df * np.log(n)
    if ebic_gamma:
        log_comb = np.array([math.lgamma(p + 1) - math.lgamma(k + 1) - math.lgamma(p - k + 1) for k in df.ravel()])
        crit = crit + 2 * ebic_gamma * log_comb.reshape(df.shape)
    return crit


def adaptive_lasso_fit(
    X,
    y,
    gamma: float = 1.0,
    n_lambda: int = 100,
    lambda_ratio: float | None = None,
    ridge: float = 1e-3,
    ebic_gamma: float = 1.0,
    min_df: int = 0,
    max_df: int | None = None,
    tol: float = 1e-12,
) -> LassoFit:
    """Adaptive lasso over a log-spaced lambda grid, tuned by (extended) BIC.

    Columns are centred and scaled to unit mean square and ``y`` is centred.
    Only fits with ``min_df <= df <= max_df`` nonzero coefficients are
    eligible (``max_df`` defaults to ``n - 2``; the criterion degenerates as a
    fit saturates).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 2:
        raise ValueError("adaptive lasso needs at least two runs")
    mu = X.mean(axis=0)
    sd = np.sqrt(((X - mu) ** 2).mean(axis=0))
    keep = np.flatnonzero(sd > 1e-12)
    dropped = [int(j) for j in np.flatnonzero(sd <= 1e-12)]
    if dropped:
        warnings.warn(f"dropping zero-variance columns {dropped}", RuntimeWarning, stacklevel=2)
    Xs = np.ascontiguousarray((X[:, keep] - mu[keep]) / sd[keep])
    ybar = y.mean()
    yc = np.ascontiguousarray(y - ybar)
    q = Xs.shape[1]
    if q == 0:
        return LassoFit(np.zeros(p), ybar, 0.0, np.nan, np.zeros(0), np.zeros(0), dropped)

    init = initial_estimate(Xs, yc, ridge)
    with np.errstate(divide="ignore"):
        w = np.abs(init) ** -gamma
    w = np.where(np.isfinite(w), w, 1e300)
    lam_max = float(np.max(np.abs(Xs.T @ yc) / (n * w)))
    if lam_max <= 0:
        return LassoFit(np.zeros(p), ybar, 0.0, np.nan, w, np.zeros(0), dropped)
    ratio = default_lambda_ratio(n, q) if lambda_ratio is None else lambda_ratio
    lambdas = lam_max * np.logspace(0, np.log10(ratio), n_lambda)
    path = _path(Xs, yc, lambdas, w, tol, 100_000)

    max_df = n - 2 if max_df is None else max_df
    rss = ((yc[None, :] - path @ Xs.T) ** 2).sum(axis=1)
    rss = np.maximum(rss, 1e-12 * max(float(yc @ yc), 1e-300))
    df = (path != 0).sum(axis=1)
    crit = information_criterion(rss, df, n, q, ebic_gamma)
    crit = np.where((df >= min_df) & (df <= max_df), crit, np.inf)
    best = int(np.argmin(crit))
    coef = np.zeros(p)
    coef[keep] = path[best] / sd[keep]
    return LassoFit(coef, float(ybar - mu @ coef), float(lambdas[best]), float(crit[best]), w, lambdas, dropped)


def identify_model(fit: LassoFit, model: TrueModel, terms: list[tuple[int, ...]]) -> bool:
    fitted = frozenset(terms[j] for j in fit.support)
    return fitted == model.term_set()


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    design_id: str
    design: Design
    shapes: list[tuple[str, str]]
    sigmas: tuple[float, ...] = SIGMAS
    inner_reps: int = 100
    outer_reps: int = 50
    seed: int = 0
    gamma: float = 1.0


@dataclass
class SimulationResult:
    # (shape, sizes, sigma) -> per-replicate identification percentages
    replicates: dict[tuple[str, str, float], np.ndarray]

    def summary(self) -> list[tuple[str, str, float, float, float]]:
        rows = []
        for (shape, sizes, sigma), pct in self.replicates.items():
            sd = float(pct.std(ddof=1)) if pct.size > 1 else 0.0
            rows.append((shape, sizes, sigma, float(pct.mean()), sd))
        return rows

    def mean(self, shape: str, sizes: str, sigma: float) -> float:
        return float(self.replicates[(shape, sizes, sigma)].mean())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["shape", "sizes", "sigma", "mean_pct", "sd_pct"])
        for shape, sizes, sigma, mean, sd in self.summary():
            w.writerow([shape, sizes, _fmt(sigma), f"{mean:.4f}", f"{sd:.4f}"])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    def write_replicates(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["shape", "sizes", "sigma", "replicate", "pct"])
            for (shape, sizes, sigma), pct in self.replicates.items():
                for r, v in enumerate(pct):
                    w.writerow([shape, sizes, _fmt(sigma), r, f"{v:.4f}"])


def _fmt(x: float) -> str:
    return repr(float(x))


def replicate_seed(seed: int, shape: str, sizes: str, sigma: float, replicate: int) -> np.random.SeedSequence:
    """Stream for one outer replicate; independent of which other cells are run."""
    key = zlib.crc32(f"{shape}|{sizes}".encode())
    return np.random.SeedSequence([seed, key, int(round(sigma * 1_000_000)), replicate])


def run_replicate(design: Design, shape: str, sizes: str, sigma: float, inner: int, ss, gamma: float = 1.0) -> float:
    rng = np.random.default_rng(ss)
    model = sample_true_model(design, shape, sizes, rng, sigma)
    terms = candidate_terms(design.m)
    X = candidate_matrix(design, terms)
    hits = 0
    for _ in range(inner):
        y = generate_response(design, model, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = adaptive_lasso_fit(X, y, gamma=gamma, min_df=1)
        hits += identify_model(fit, model, terms)
    return 100.0 * hits / inner


def _replicate_task(args):
    rows, names, shape, sizes, sigma, inner, entropy, gamma = args
    return run_replicate(Design(rows, names), shape, sizes, sigma, inner, np.random.SeedSequence(entropy), gamma)


def run_scenario(scenario: Scenario, workers: int = 1) -> SimulationResult:
    d = scenario.design
    for shape, sizes in scenario.shapes:
        p = 1 + max(max(s) for s, _ in parse_shape(shape, sizes))
        if p > d.m:
            raise ValueError(f"shape {shape!r} needs {p} factors but the design has {d.m}")
    cells = [(sh, sz, float(sig)) for sh, sz in scenario.shapes for sig in scenario.sigmas]
    tasks = []
    for sh, sz, sig in cells:
        for r in range(scenario.outer_reps):
            ss = replicate_seed(scenario.seed, sh, sz, sig, r)
            tasks.append((d.rows, d.names, sh, sz, sig, scenario.inner_reps, ss.entropy, scenario.gamma))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pcts = list(pool.map(_replicate_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        pcts = [_replicate_task(t) for t in tasks]
    out = {}
    for i, cell in enumerate(cells):
        out[cell] = np.array(pcts[i * scenario.outer_reps : (i + 1) * scenario.outer_reps])
    return SimulationResult(out)


def table_shapes(spec: str) -> list[tuple[str, str]]:
    """``all``, ``row7``, ``row1,row2`` or ``F1+F2:b+s`` style lists."""
    rows = {r: (s, z) for r, s, z in TABLE_SHAPES}
    if spec == "all":
        return [(s, z) for _, s, z in TABLE_SHAPES]
    out = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if part.startswith("row"):
            k = int(part[3:])
            if k not in rows:
                raise ValueError(f"no table row {k}")
            out.append(rows[k])
        elif ":" in part:
            s, z = part.split(":", 1)
            parse_shape(s, z)
            out.append((s, z))
        else:
            raise ValueError(f"cannot parse shape spec {part!r}")
    return out
