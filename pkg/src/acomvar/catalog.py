"""Known common-variance series, published reference designs and the
projection-matrix sufficient condition."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .design import Design, DesignProblem, ModelSpec, main_effect_block, term_block


def _foldover_rows(m: int) -> np.ndarray:
    half = 2 * np.eye(m, dtype=int) - np.ones((m, m), dtype=int)
    return np.vstack([half, -half])


def foldover_2m(m: int) -> Design:
    """``[2I - J; -2I + J]``: the 2m-run two-level fold-over series."""
    if m < 3:
        raise ValueError("foldover_2m needs m >= 3 (2m runs must cover m + 2 parameters)")
    return Design(_foldover_rows(m))


def foldover_2m_plus_2(m: int) -> Design:
    """``[j'; -j'; 2I - J; -2I + J]``: the (2m+2)-run fold-over series."""
    if m < 2:
        raise ValueError("foldover_2m_plus_2 needs m >= 2")
    ones = np.ones((1, m), dtype=int)
    return Design(np.vstack([ones, -ones, _foldover_rows(m)]))


@dataclass(frozen=True)
class ReferenceDesign:
    id: str
    design: Design
    source: str
    levels: int | None


@lru_cache(maxsize=1)
def _manifest() -> dict[str, dict]:
    text = resources.files("acomvar").joinpath("data/manifest.json").read_text()
    return {entry["id"]: entry for entry in json.loads(text)}


def reference_ids() -> list[str]:
    return list(_manifest())


def reference_csv(design_id: str) -> str:
    """Raw CSV text of a shipped design, checked against its recorded digest."""
    try:
        entry = _manifest()[design_id]
    except KeyError:
        raise KeyError(f"unknown reference design {design_id!r}; known: {', '.join(_manifest())}") from None
    text = resources.files("acomvar").joinpath(f"data/{entry['file']}").read_text()
    digest = hashlib.sha256(text.encode()).hexdigest()
    if digest != entry["sha256"]:
        raise RuntimeError(f"checksum mismatch for {design_id}: data file was modified")
    return text


def load_reference_design(design_id: str) -> ReferenceDesign:
    entry = _manifest().get(design_id)
    text = reference_csv(design_id)
    return ReferenceDesign(design_id, Design.from_csv(text), entry["source"], entry["levels"])


def projection_matrix(design: Design | np.ndarray, problem: DesignProblem) -> np.ndarray:
    """``I - X_1 (X_1'X_1)^{-1} X_1'`` with ``X_1`` the intercept and main effects."""
    rows = design.rows if isinstance(design, Design) else np.asarray(design, dtype=float)
    x1 = main_effect_block(rows, problem)
    if np.linalg.matrix_rank(x1) < x1.shape[1]:
        raise np.linalg.LinAlgError("main-effect block X_1 is rank deficient")
    return np.eye(x1.shape[0]) - x1 @ np.linalg.solve(x1.T @ x1, x1.T)


def projection_condition(
    design: Design | np.ndarray,
    model_i1: ModelSpec,
    model_i2: ModelSpec,
    problem: DesignProblem,
    atol: float = 1e-9,
) -> bool:
    """True iff ``P X_2^(i1) == P X_2^(i2)`` elementwise within ``atol``.

    When it holds for every pair of models the design has common variance;
    the converse does not hold.
    """
    rows = design.rows if isinstance(design, Design) else np.asarray(design, dtype=float)
    P = projection_matrix(rows, problem)
    a = P @ term_block(rows, problem, model_i1.interactions)
    b = P @ term_block(rows, problem, model_i2.interactions)
    return bool(np.all(np.abs(a - b) <= atol))
