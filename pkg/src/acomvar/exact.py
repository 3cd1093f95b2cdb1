"""Exact integer determinants and rational dispersions for lattice designs."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .design import Design, DesignProblem, enumerate_models, enumerate_terms, main_effect_block, term_block


def bareiss_det(A) -> np.ndarray:
    """Fraction-free Gaussian elimination over a batch of integer matrices.

    ``A`` has shape ``(..., p, p)``; the result is an object array of Python
    ints with shape ``A.shape[:-2]``.  Works on any integer input without
    overflow because arithmetic is carried out on Python ints.
    """
    A = np.asarray(A)
    batch_shape = A.shape[:-2]
    p = A.shape[-1]
    if A.shape[-2] != p:
        raise ValueError("bareiss_det needs square matrices")
    if p == 0:
        return np.ones(batch_shape, dtype=object)
    M = np.array(A.reshape(-1, p, p), dtype=object)
    B = M.shape[0]
    sign = np.ones(B, dtype=object)
    dead = np.zeros(B, dtype=bool)
    prev = np.ones(B, dtype=object)
    rows = np.arange(B)
    for k in range(p - 1):
        nonzero = M[:, k:, k] != 0
        has = nonzero.any(axis=1)
        dead |= ~has
        piv = k + nonzero.argmax(axis=1)
        swap = has & (piv != k)
        if swap.any():
            r = rows[swap]
            pk = piv[swap]
            tmp = M[r, k, :].copy()
            M[r, k, :] = M[r, pk, :]
            M[r, pk, :] = tmp
            sign[swap] = -sign[swap]
        pivot = M[:, k, k].copy()
        pivot[dead] = 1
        sub = M[:, k + 1 :, k + 1 :]
        col = M[:, k + 1 :, k][:, :, None]
        row = M[:, k, k + 1 :][:, None, :]
        M[:, k + 1 :, k + 1 :] = (sub * pivot[:, None, None] - col * row) // prev[:, None, None]
        prev = pivot
    det = sign * M[:, p - 1, p - 1]
    det[dead] = 0
    return det.reshape(batch_shape)


def int_rows(design: Design | np.ndarray) -> np.ndarray:
    rows = design.rows if isinstance(design, Design) else np.asarray(design)
    out = np.rint(rows).astype(np.int64)
    if not np.array_equal(out, rows):
        raise ValueError("exact arithmetic needs integer (lattice) levels")
    return out


def exact_gram_dets(rows: np.ndarray, problem: DesignProblem):
    """``(det(X_1'X_1), [det(X^(i)'X^(i)) for each model])`` as Python ints."""
    rows = int_rows(rows)
    x1 = main_effect_block(rows, problem).astype(np.int64)
    x2 = term_block(rows, problem).astype(np.int64)
    X = np.hstack([x1, x2])
    G = X.T @ X
    p1 = x1.shape[1]
    terms = enumerate_terms(problem)
    pos = {t: j for j, t in enumerate(terms)}
    subs = []
    for mdl in enumerate_models(problem):
        idx = list(range(p1)) + [p1 + pos[t] for t in mdl.interactions]
        subs.append(G[np.ix_(idx, idx)])
    d1 = int(bareiss_det(G[:p1, :p1]))
    return d1, [int(d) for d in bareiss_det(np.stack(subs))]


def exact_dispersions(design: Design | np.ndarray, problem: DesignProblem) -> list[Fraction | None]:
    """Rational dispersions ``det(X_1'X_1) / det(X'X)``; ``None`` for singular models.

    The trailing k x k block of ``(X'X)^{-1}`` is the inverse of the Schur
    complement of ``X_1'X_1``, so its determinant is this ratio for any k.
    """
    d1, dets = exact_gram_dets(design, problem)
    return [Fraction(d1, d) if d != 0 else None for d in dets]


def classify(design: Design | np.ndarray, problem: DesignProblem):
    """Exact ``(rank_ok, is_cv, common_value)`` for one lattice design."""
    d1, dets = exact_gram_dets(design, problem)
    if any(d == 0 for d in dets):
        return False, False, None
    if all(d == dets[0] for d in dets):
        return True, True, Fraction(d1, dets[0])
    return True, False, None
