"""Uncommon-parameter dispersions, the A-ComVar objective and the min/max ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .design import (
    Design,
    DesignProblem,
    ModelSpec,
    build_model_matrix,
    enumerate_models,
    enumerate_terms,
    main_effect_block,
    term_block,
)

DEFAULT_PHI = 1e14
DEFAULT_CV_TOL = 1e-9
# eigenvalues of X'X below this fraction of the largest are treated as zero
SINGULAR_RTOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a model's information matrix X'X is rank deficient."""

    def __init__(self, message: str, context=None):
        super().__init__(message)
        self.context = context


def _sym_inverse(gram: np.ndarray):
    """Batched inverse of symmetric PSD matrices via eigendecomposition.

    Returns ``(inverse, singular_mask)``; inverses of singular entries are NaN.
    """
    w, v = np.linalg.eigh(gram)
    wmax = np.abs(w).max(axis=-1, keepdims=True)
    singular = (w <= SINGULAR_RTOL * np.maximum(wmax, np.finfo(float).tiny)).any(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = (v / w[..., None, :]) @ np.swapaxes(v, -1, -2)
    inv = 0.5 * (inv + np.swapaxes(inv, -1, -2))
    inv[singular] = np.nan
    return inv, singular


def fisher_inverse(M: np.ndarray, context=None) -> np.ndarray:
    """``(M'M)^{-1}`` for a model matrix with at least as many rows as columns."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] < M.shape[1]:
        raise SingularMatrixError(f"{M.shape[0]} runs for {M.shape[1]} parameters", context)
    inv, singular = _sym_inverse(M.T @ M)
    if singular:
        raise SingularMatrixError("information matrix X'X is singular", context)
    return inv


def block_dispersion(inv: np.ndarray, k: int) -> np.ndarray:
    """Last diagonal entry (k=1) or det of the trailing k x k block (k>1)."""
    if k == 1:
        return inv[..., -1, -1]
    return np.linalg.det(inv[..., -k:, -k:])


def uncommon_dispersion(design: Design | np.ndarray, model: ModelSpec, problem: DesignProblem) -> float:
    M = build_model_matrix(design, model, problem)
    inv = fisher_inverse(M, context=model)
    return float(block_dispersion(inv, len(model.interactions)))


def objective_value(dispersions, phi: float = DEFAULT_PHI) -> float:
    """``(1/mean) / (1 + phi * sum((d - mean)^2))``; zero if any dispersion is infinite."""
    d = np.asarray(dispersions, dtype=float)
    if not np.isfinite(d).all():
        return 0.0
    mean = d.mean()
    return float((1.0 / mean) / (1.0 + phi * np.sum((d - mean) ** 2)))


def acv_ratio(dispersions) -> float:
    d = np.asarray(dispersions, dtype=float)
    if not np.isfinite(d).all():
        return 0.0
    return float(d.min() / d.max())


@dataclass
class FitnessReport:
    dispersions: np.ndarray
    mean_dispersion: float
    objective: float
    r_acv: float
    is_cv: bool
    singular_models: list[int]
    labels: list[str] = field(default_factory=list)
    phi: float = DEFAULT_PHI

    def to_dict(self, problem: DesignProblem) -> dict:
        def num(x):
            x = float(x)
            return x if math.isfinite(x) else None

        return {
            "m": problem.m,
            "levels": problem.num_levels,
            "n": problem.n,
            "k": problem.k,
            "phi": self.phi,
            "models": [
                {"index": i + 1, "interaction": label, "dispersion": num(d)}
                for i, (label, d) in enumerate(zip(self.labels, self.dispersions))
            ],
            "mean_dispersion": num(self.mean_dispersion),
            "objective": float(self.objective),
            "r_acv": float(self.r_acv),
            "is_cv": bool(self.is_cv),
            "singular_models": list(self.singular_models),
        }


@lru_cache(maxsize=64)
def _model_index(problem: DesignProblem):
    terms = enumerate_terms(problem)
    pos = {t: j for j, t in enumerate(terms)}
    models = enumerate_models(problem)
    idx = np.array([[pos[t] for t in mdl.interactions] for mdl in models], dtype=int)
    labels = [mdl.label(problem.names) for mdl in models]
    return terms, idx, labels


def model_matrices(rows: np.ndarray, problem: DesignProblem) -> np.ndarray:
    """Stack of all ``s`` model matrices, shape ``(s, n, 1 + q + k)``."""
    terms, idx, _ = _model_index(problem)
    x1 = main_effect_block(rows, problem)
    x2 = term_block(rows, problem, terms)
    s, n = idx.shape[0], x1.shape[0]
    return np.concatenate([np.broadcast_to(x1, (s, n, x1.shape[1])), np.transpose(x2[:, idx], (1, 0, 2))], axis=2)


def dispersions(design: Design | np.ndarray, problem: DesignProblem) -> tuple[np.ndarray, np.ndarray]:
    """Per-model dispersions (``inf`` where singular) and the singular mask."""
    rows = design.rows if isinstance(design, Design) else np.asarray(design, dtype=float)
    if rows.shape[1] != problem.m:
        raise ValueError(f"design has {rows.shape[1]} columns, problem has {problem.m} factors")
    M = model_matrices(rows, problem)
    if M.shape[1] < M.shape[2]:
        s = M.shape[0]
        return np.full(s, np.inf), np.ones(s, dtype=bool)
    inv, singular = _sym_inverse(np.swapaxes(M, 1, 2) @ M)
    d = block_dispersion(inv, problem.k)
    d = np.where(singular, np.inf, d)
    return d, singular


def evaluate(
    design: Design | np.ndarray,
    problem: DesignProblem,
    phi: float = DEFAULT_PHI,
    cv_tol: float = DEFAULT_CV_TOL,
) -> FitnessReport:
    """Score a design over every candidate model of ``problem``.

    Singular models never raise: they zero the objective and ratio and are
    listed in ``singular_models`` so a search can rank the design last.
    """
    if phi < 0:
        raise ValueError("phi must be non-negative")
    d, singular = dispersions(design, problem)
    _, _, labels = _model_index(problem)
    if singular.any():
        finite = d[~singular]
        mean = float(finite.mean()) if finite.size else math.inf
        return FitnessReport(d, mean, 0.0, 0.0, False, [int(i) + 1 for i in np.flatnonzero(singular)], labels, phi)
    mean = float(d.mean())
    r = acv_ratio(d)
    return FitnessReport(d, mean, objective_value(d, phi), r, r >= 1.0 - cv_tol, [], labels, phi)
