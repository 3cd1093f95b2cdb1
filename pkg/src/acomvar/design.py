"""Factorial design problems, candidate points, candidate models and model matrices.

A design problem fixes ``m`` factors (all two-level or all three-level), a run
count ``n`` and the number ``k`` of two-factor interaction terms carried by each
candidate model.  Every candidate model shares the general mean and all main
effects and differs only in its interaction terms.

Coding conventions
------------------
Two-level factors use levels -1/+1; the main-effect column is the level itself
and an interaction column is the product of the two factor columns.

Three-level factors use levels -1/0/+1 with the unnormalized orthogonal
polynomial contrasts linear=(-1, 0, 1) and quadratic=(1, -2, 1).  The four
degrees of freedom of a two-factor interaction are split, by default, into the
``AB`` and ``AB^2`` components: with levels relabelled 0/1/2, ``AB`` is the
factor ``(a + b) mod 3`` and ``AB^2`` is ``(a + 2b) mod 3``, and each
contributes its linear and quadratic contrast.  The alternative ``"product"``
coding uses the tensor products LL, LQ, QL, QQ of the main-effect contrasts.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LEVELS = {2: (-1, 1), 3: (-1, 0, 1)}

LINEAR = np.array([-1, 0, 1])
QUADRATIC = np.array([1, -2, 1])

MODULAR_COMPONENTS = ("AB.lin", "AB.quad", "AB2.lin", "AB2.quad")
PRODUCT_COMPONENTS = ("LL", "LQ", "QL", "QQ")
CODINGS = {"modular": MODULAR_COMPONENTS, "product": PRODUCT_COMPONENTS}


@dataclass(frozen=True)
class FactorSpec:
    name: str
    num_levels: int

    def __post_init__(self):
        if self.num_levels not in LEVELS:
            raise ValueError(f"factor {self.name!r}: num_levels must be 2 or 3, got {self.num_levels}")

    @property
    def levels(self) -> tuple[int, ...]:
        return LEVELS[self.num_levels]


def default_names(m: int) -> list[str]:
    if m <= 26:
        return list(string.ascii_uppercase[:m])
    return [f"X{j + 1}" for j in range(m)]


@dataclass(frozen=True)
class DesignProblem:
    """An ``n``-run, ``m``-factor design problem with ``k`` interactions per model."""

    factors: tuple[FactorSpec, ...]
    n: int
    k: int = 1
    coding: str = "modular"
    # eval accepts under-sized designs and reports every model singular
    check_runs: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise ValueError(f"factor names must be unique: {names}")
        if self.m < 2:
            raise ValueError("a design problem needs at least two factors")
        if len({f.num_levels for f in self.factors}) != 1:
            raise ValueError("mixed-level problems are not supported")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.coding not in CODINGS:
            raise ValueError(f"unknown coding {self.coding!r}")
        if self.k > self.num_terms:
            raise ValueError(f"k={self.k} exceeds the {self.num_terms} available interaction terms")
        if self.check_runs and self.n < self.num_params:
            raise ValueError(
                f"n={self.n} runs cannot estimate {self.num_params} parameters "
                f"(1 + {self.num_main_columns} main-effect columns + {self.k} interactions)"
            )

    @classmethod
    def symmetric(
        cls, m: int, levels: int, n: int, k: int = 1, coding: str = "modular", check_runs: bool = True
    ) -> DesignProblem:
        factors = tuple(FactorSpec(name, levels) for name in default_names(m))
        return cls(factors, n, k, coding, check_runs)

    @property
    def m(self) -> int:
        return len(self.factors)

    @property
    def num_levels(self) -> int:
        return self.factors[0].num_levels

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def num_main_columns(self) -> int:
        return self.m * (self.num_levels - 1)

    @property
    def num_params(self) -> int:
        return 1 + self.num_main_columns + self.k

    @property
    def components(self) -> tuple[str | None, ...]:
        return (None,) if self.num_levels == 2 else CODINGS[self.coding]

    @property
    def num_terms(self) -> int:
        return math.comb(self.m, 2) * len(self.components)

    @property
    def num_models(self) -> int:
        return math.comb(self.num_terms, self.k)

    @property
    def num_candidates(self) -> int:
        return self.num_levels**self.m


@dataclass(frozen=True)
class InteractionTerm:
    a: int
    b: int
    component: str | None = None

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("an interaction needs two distinct factors")

    def label(self, names: Sequence[str]) -> str:
        na, nb = names[self.a], names[self.b]
        base = f"{na}{nb}" if len(na) == 1 and len(nb) == 1 else f"{na}:{nb}"
        return base if self.component is None else f"{base}[{self.component}]"


@dataclass(frozen=True)
class ModelSpec:
    index: int
    interactions: tuple[InteractionTerm, ...]

    def label(self, names: Sequence[str]) -> str:
        return "+".join(t.label(names) for t in self.interactions)


@dataclass
class Design:
    """An ``n x m`` matrix of coded factor levels."""

    rows: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if not self.names:
            self.names = tuple(default_names(self.rows.shape[1]))
        self.names = tuple(self.names)
        if len(self.names) != self.rows.shape[1]:
            raise ValueError(f"{len(self.names)} names for {self.rows.shape[1]} columns")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def m(self) -> int:
        return self.rows.shape[1]

    def is_lattice(self, num_levels: int) -> bool:
        return bool(np.isin(self.rows, LEVELS[num_levels]).all())

    def copy(self) -> Design:
        return Design(self.rows.copy(), self.names)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.names)
        for row in self.rows:
            writer.writerow([_format_level(v) for v in row])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> Design:
        reader = csv.reader(io.StringIO(text))
        lines = [r for r in reader if r and any(c.strip() for c in r)]
        if not lines:
            raise ValueError("empty design CSV")
        names = tuple(c.strip() for c in lines[0])
        body = lines[1:]
        if not body:
            raise ValueError("design CSV has no runs")
        if any(len(r) != len(names) for r in body):
            raise ValueError("ragged design CSV")
        rows = np.array([[float(c) for c in r] for r in body])
        return cls(rows, names)

    @classmethod
    def read_csv(cls, path: str | Path) -> Design:
        return cls.from_csv(Path(path).read_text())


def _format_level(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def enumerate_full_factorial(problem: DesignProblem | Sequence[FactorSpec]) -> np.ndarray:
    """All candidate points, lexicographic in the coded levels."""
    factors = problem.factors if isinstance(problem, DesignProblem) else tuple(problem)
    return np.array(list(itertools.product(*(f.levels for f in factors))), dtype=float)


def main_effect_contrasts(level: float, num_levels: int) -> tuple[int, ...]:
    if num_levels not in LEVELS or level not in LEVELS[num_levels]:
        raise ValueError(f"level {level!r} is not valid for a {num_levels}-level factor")
    if num_levels == 2:
        return (int(level),)
    i = int(level) + 1
    return int(LINEAR[i]), int(QUADRATIC[i])


def enumerate_terms(problem: DesignProblem) -> list[InteractionTerm]:
    return [
        InteractionTerm(a, b, comp)
        for a, b in itertools.combinations(range(problem.m), 2)
        for comp in problem.components
    ]


def enumerate_models(problem: DesignProblem) -> list[ModelSpec]:
    terms = enumerate_terms(problem)
    return [ModelSpec(i + 1, subset) for i, subset in enumerate(itertools.combinations(terms, problem.k))]


def _level_index(col: np.ndarray) -> np.ndarray:
    idx = np.rint(col).astype(int) + 1
    if not np.array_equal(idx - 1, col) or idx.min() < 0 or idx.max() > 2:
        raise ValueError("three-level contrasts need lattice levels -1/0/+1")
    return idx


def main_effect_block(rows: np.ndarray, problem: DesignProblem) -> np.ndarray:
    """``(j_n, X_1)``: the intercept followed by every factor's main-effect columns."""
    rows = np.asarray(rows, dtype=float)
    cols = [np.ones(rows.shape[0])]
    if problem.num_levels == 2:
        cols.extend(rows.T)
    else:
        idx = _level_index(rows)
        for j in range(problem.m):
            cols += [LINEAR[idx[:, j]], QUADRATIC[idx[:, j]]]
    return np.column_stack(cols).astype(float)


def _component_column(ia: np.ndarray, ib: np.ndarray, comp: str, coding: str) -> np.ndarray:
    if coding == "modular":
        w = (ia + ib) % 3 if comp.startswith("AB.") else (ia + 2 * ib) % 3
        return (LINEAR if comp.endswith("lin") else QUADRATIC)[w]
    first = LINEAR if comp[0] == "L" else QUADRATIC
    second = LINEAR if comp[1] == "L" else QUADRATIC
    return first[ia] * second[ib]


def term_column(rows: np.ndarray, term: InteractionTerm, problem: DesignProblem) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    xa, xb = rows[:, term.a], rows[:, term.b]
    if problem.num_levels == 2:
        return xa * xb
    return _component_column(_level_index(xa), _level_index(xb), term.component, problem.coding).astype(float)


def term_block(rows: np.ndarray, problem: DesignProblem, terms: Iterable[InteractionTerm] | None = None) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    terms = enumerate_terms(problem) if terms is None else list(terms)
    if problem.num_levels == 2:
        a = [t.a for t in terms]
        b = [t.b for t in terms]
        return rows[:, a] * rows[:, b]
    idx = _level_index(rows)
    cols = [_component_column(idx[:, t.a], idx[:, t.b], t.component, problem.coding) for t in terms]
    return np.column_stack(cols).astype(float)


def build_model_matrix(design: Design | np.ndarray, model: ModelSpec, problem: DesignProblem) -> np.ndarray:
    """``X^(i) = (j_n, X_1, X_2^(i))`` for one candidate model."""
    rows = design.rows if isinstance(design, Design) else np.asarray(design, dtype=float)
    for t in model.interactions:
        if max(t.a, t.b) >= rows.shape[1]:
            raise ValueError(f"model term {t} refers to a factor outside the design")
    x1 = main_effect_block(rows, problem)
    x2 = term_block(rows, problem, model.interactions)
    return np.hstack([x1, x2])
