"""Steady-state genetic search for approximate common-variance designs.

A chromosome is a whole ``n x m`` design.  Each iteration replaces the
``num_replace`` worst chromosomes by mutated crossovers of two survivors and
stops as soon as any chromosome has common variance.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import LEVELS, Design, DesignProblem, enumerate_full_factorial
from .variance import DEFAULT_CV_TOL, DEFAULT_PHI, FitnessReport, evaluate

log = logging.getLogger(__name__)

PARENT_STRATEGIES = ("uniform", "best")


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 50
    mutation_prob: float = 0.05
    num_replace: int = 2
    max_iter: int = 10_000
    phi: float = DEFAULT_PHI
    seed: int = 0
    cv_tol: float = DEFAULT_CV_TOL
    parents: str = "uniform"

    def __post_init__(self):
        if self.population_size < 3:
            raise ValueError("population_size must be at least 3")
        if self.num_replace < 1:
            raise ValueError("num_replace must be at least 1")
        if self.num_replace > self.population_size - 2:
            raise ValueError("num_replace must leave at least two survivors to act as parents")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if self.phi < 0:
            raise ValueError("phi must be non-negative")
        if self.parents not in PARENT_STRATEGIES:
            raise ValueError(f"parents must be one of {PARENT_STRATEGIES}")


@dataclass
class Chromosome:
    design: Design
    fitness: FitnessReport

    @classmethod
    def build(cls, design: Design, problem: DesignProblem, config: GAConfig) -> Chromosome:
        return cls(design, evaluate(design, problem, config.phi, config.cv_tol))

    @property
    def objective(self) -> float:
        return self.fitness.objective


@dataclass
class SearchResult:
    best_design: Design
    best: FitnessReport
    iterations: int
    terminated_early: bool
    # (iteration, best objective, r_acv of that design)
    trace: list[tuple[int, float, float]] = field(default_factory=list)

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "best_objective", "best_r_acv"])
            for it, obj, r in self.trace:
                w.writerow([it, repr(float(obj)), repr(float(r))])


def init_population(problem: DesignProblem, config: GAConfig, rng: np.random.Generator) -> list[Chromosome]:
    points = enumerate_full_factorial(problem)
    N, n = len(points), problem.n
    pop = []
    for _ in range(config.population_size):
        idx = rng.choice(N, size=n, replace=n > N)
        pop.append(Chromosome.build(Design(points[idx], problem.names), problem, config))
    return pop


def crossover(p1: Chromosome | Design, p2: Chromosome | Design, rng: np.random.Generator, cut: int | None = None) -> Design:
    """Columns ``1..cut`` from ``p1`` and the rest from ``p2``; ``cut`` uniform on 1..m-1."""
    d1 = p1.design if isinstance(p1, Chromosome) else p1
    d2 = p2.design if isinstance(p2, Chromosome) else p2
    if d1.rows.shape != d2.rows.shape:
        raise ValueError("parents must have the same shape")
    m = d1.m
    if cut is None:
        cut = int(rng.integers(1, m)) if m > 1 else 1
    rows = np.hstack([d1.rows[:, :cut], d2.rows[:, cut:]])
    return Design(rows, d1.names)


def mutate(design: Design, mutation_prob: float, rng: np.random.Generator, num_levels: int) -> Design:
    """Each cell moves to one of the factor's other levels with probability ``mutation_prob``."""
    levels = np.array(LEVELS[num_levels], dtype=float)
    rows = design.rows
    hit = rng.random(rows.shape) < mutation_prob
    if not hit.any():
        return design.copy()
    idx = np.searchsorted(levels, rows).astype(int)
    shift = rng.integers(1, num_levels, size=rows.shape)
    new = np.where(hit, levels[(idx + shift) % num_levels], rows)
    return Design(new, design.names)


def _best_index(pop: list[Chromosome]) -> int:
    # first maximum keeps the choice deterministic
    return int(np.argmax([c.objective for c in pop]))


def run_search(problem: DesignProblem, config: GAConfig = GAConfig()) -> SearchResult:
    rng = np.random.default_rng(config.seed)
    pop = init_population(problem, config, rng)
    trace = []

    def record(it):
        b = pop[_best_index(pop)]
        trace.append((it, b.objective, b.fitness.r_acv))

    record(0)
    it = 0
    found = any(c.fitness.is_cv for c in pop)
    while not found and it < config.max_iter:
        it += 1
        obj = np.array([c.objective for c in pop])
        order = np.lexsort((rng.random(len(pop)), obj))
        worst = order[: config.num_replace]
        survivors = order[config.num_replace :]
        children = []
        for _ in range(config.num_replace):
            if config.parents == "best":
                a, b = survivors[-1], survivors[-2]
            else:
                a, b = rng.choice(survivors, size=2, replace=False)
            child = crossover(pop[a], pop[b], rng)
            child = mutate(child, config.mutation_prob, rng, problem.num_levels)
            children.append(child)
        for slot, child in zip(worst, children):
            pop[slot] = Chromosome.build(child, problem, config)
        record(it)
        found = any(c.fitness.is_cv for c in pop)
    best = pop[_best_index(pop)]
    if found and not best.fitness.is_cv:
        best = next(c for c in pop if c.fitness.is_cv)
    log.info("search stopped after %d iterations, r_acv=%.6f", it, best.fitness.r_acv)
    return SearchResult(best.design, best.fitness, it, found, trace)
