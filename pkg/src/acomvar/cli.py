"""Command-line entry point: ``acomvar {search,eval,exhaustive,catalog,simulate}``.

Exit codes: 0 success, 2 usage or input error, 3 exhaustive budget refusal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import catalog, selection
from .design import CODINGS, Design, DesignProblem, FactorSpec
from .exhaustive import BudgetExceeded, budget_from_env, exhaustive_search, optcv
from .ga import PARENT_STRATEGIES, GAConfig, run_search
from .variance import DEFAULT_CV_TOL, DEFAULT_PHI, evaluate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BUDGET = 3


class InputError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_design(ref: str) -> tuple[Design, int | None]:
    """A catalog id or a CSV path; returns the design and its level count if known."""
    if ref in catalog.reference_ids():
        rd = catalog.load_reference_design(ref)
        return rd.design, rd.levels
    path = Path(ref)
    try:
        return Design.read_csv(path), None
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read design {ref!r}: {exc}") from None


# ---------------------------------------------------------------------------


def cmd_search(args) -> int:
    problem = DesignProblem.symmetric(args.m, args.levels, args.n, args.k, args.coding)
    config = GAConfig(
        population_size=args.pop,
        mutation_prob=args.mut,
        num_replace=args.replace,
        max_iter=args.iters,
        phi=args.phi,
        seed=args.seed,
        cv_tol=args.tol,
        parents=args.parents,
    )
    result = run_search(problem, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.best_design.write_csv(out / "design.csv")
    report = result.best.to_dict(problem)
    report["iterations"] = result.iterations
    report["terminated_early"] = result.terminated_early
    report["seed"] = args.seed
    (out / "report.json").write_text(_dump(report))
    result.write_trace(out / "trace.csv")
    print(
        f"iterations={result.iterations} objective={result.best.objective!r} "
        f"r_acv={result.best.r_acv!r} is_cv={result.best.is_cv}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    design, known_levels = _load_design(args.design)
    levels = args.levels or known_levels or (3 if design.is_lattice(3) and not design.is_lattice(2) else 2)
    if levels == 3 and not design.is_lattice(3):
        raise InputError("three-level designs must use the levels -1, 0, 1")
    problem = DesignProblem(
        tuple(FactorSpec(name, levels) for name in design.names),
        design.n,
        args.k,
        args.coding,
        check_runs=False,
    )
    report = evaluate(design, problem, args.phi, args.tol)
    _emit(_dump(report.to_dict(problem)), args.out)
    return EXIT_OK


def cmd_exhaustive(args) -> int:
    problem = DesignProblem.symmetric(args.m, args.levels, args.n, args.k, args.coding)
    budget = args.budget if args.budget is not None else budget_from_env()
    report = exhaustive_search(problem, workers=args.workers, budget=budget)
    _emit(_dump(report.to_dict()), args.out)
    if args.witness:
        best = optcv(report)
        if best is not None:
            best[1].write_csv(args.witness)
    return EXIT_OK


def cmd_catalog(args) -> int:
    if args.action == "list":
        lines = []
        for rid in catalog.reference_ids():
            rd = catalog.load_reference_design(rid)
            lines.append(f"{rid}\t{rd.design.n}x{rd.design.m}\t{rd.source}")
        _emit("\n".join(lines) + "\n", args.out)
        return EXIT_OK
    if not args.id:
        raise InputError(f"catalog {args.action} needs a design id")
    if args.id not in catalog.reference_ids():
        raise InputError(f"unknown design id {args.id!r}; try 'catalog list'")
    if args.action == "show":
        _emit(catalog.reference_csv(args.id), args.out)
        return EXIT_OK
    rd = catalog.load_reference_design(args.id)
    levels = rd.levels or 2
    problem = DesignProblem.symmetric(rd.design.m, levels, rd.design.n, args.k, args.coding, check_runs=False)
    report = evaluate(rd.design, problem, args.phi, args.tol)
    _emit(_dump(report.to_dict(problem)), args.out)
    return EXIT_OK


def _parse_shapes(spec: str) -> list[tuple[str, str]]:
    path = Path(spec)
    if path.is_file():
        shapes = []
        for line in path.read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("row") or line == "all":
                shapes += selection.table_shapes(line)
            else:
                parts = [p.strip() for p in line.replace(":", ",").split(",")]
                if len(parts) != 2:
                    raise InputError(f"bad shape line {line!r}; expected 'shape,sizes'")
                selection.parse_shape(*parts)
                shapes.append((parts[0], parts[1]))
        return shapes
    return selection.table_shapes(spec)


def cmd_simulate(args) -> int:
    design, _ = _load_design(args.design)
    shapes = _parse_shapes(args.shapes)
    if not shapes:
        raise InputError("no model shapes given")
    try:
        sigmas = tuple(float(s) for s in args.sigmas.split(",") if s.strip())
    except ValueError:
        raise InputError(f"bad --sigmas {args.sigmas!r}") from None
    if not sigmas or any(s < 0 for s in sigmas):
        raise InputError("sigmas must be non-negative")
    if args.inner < 1 or args.outer < 1:
        raise InputError("--inner and --outer must be positive")
    scenario = selection.Scenario(args.design, design, shapes, sigmas, args.inner, args.outer, args.seed, args.gamma)
    result = selection.run_scenario(scenario, workers=args.workers)
    _emit(result.to_csv(), args.out)
    if args.replicates:
        result.write_replicates(args.replicates)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acomvar", description="Approximate common-variance factorial designs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def problem_flags(p):
        p.add_argument("--levels", type=int, choices=(2, 3), required=True)
        p.add_argument("--m", type=int, required=True, help="number of factors")
        p.add_argument("--n", type=int, required=True, help="number of runs")
        p.add_argument("--k", type=int, default=1, help="interaction terms per model")
        p.add_argument("--coding", choices=sorted(CODINGS), default="modular", help="three-level interaction coding")

    p = sub.add_parser("search", help="genetic search for a (near) common-variance design")
    problem_flags(p)
    p.add_argument("--pop", type=int, default=50)
    p.add_argument("--mut", type=float, default=0.05)
    p.add_argument("--replace", type=int, default=2)
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--phi", type=float, default=DEFAULT_PHI)
    p.add_argument("--tol", type=float, default=DEFAULT_CV_TOL)
    p.add_argument("--parents", choices=PARENT_STRATEGIES, default="uniform")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for design.csv, report.json, trace.csv")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="score one design over every candidate model")
    p.add_argument("--design", required=True, help="CSV path or catalog id")
    p.add_argument("--levels", type=int, choices=(2, 3))
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--coding", choices=sorted(CODINGS), default="modular")
    p.add_argument("--phi", type=float, default=DEFAULT_PHI)
    p.add_argument("--tol", type=float, default=DEFAULT_CV_TOL)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("exhaustive", help="census of every n-subset of the full factorial")
    problem_flags(p)
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--budget", type=int, help="maximum number of subsets (default: $ACOMVAR_BUDGET or 2e7)")
    p.add_argument("--witness", help="write the smallest-value CV design here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_exhaustive)

    p = sub.add_parser("catalog", help="reference designs")
    p.add_argument("action", choices=("list", "show", "verify"))
    p.add_argument("id", nargs="?")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--coding", choices=sorted(CODINGS), default="modular")
    p.add_argument("--phi", type=float, default=DEFAULT_PHI)
    p.add_argument("--tol", type=float, default=DEFAULT_CV_TOL)
    p.add_argument("--out")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("simulate", help="model-identification simulation with the adaptive lasso")
    p.add_argument("--design", required=True, help="catalog id or CSV path")
    p.add_argument("--shapes", default="all", help="'all', 'row1,row2', 'F1+F2:b+s' or a file of such lines")
    p.add_argument("--sigmas", default=",".join(repr(s) for s in selection.SIGMAS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inner", type=int, default=100)
    p.add_argument("--outer", type=int, default=50)
    p.add_argument("--gamma", type=float, default=1.0, help="adaptive weight exponent")
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--out", help="results CSV (default: stdout)")
    p.add_argument("--replicates", help="per-replicate percentages CSV")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"acomvar: {exc}; raise --budget or ACOMVAR_BUDGET to proceed", file=sys.stderr)
        return EXIT_BUDGET
    except (InputError, ValueError, KeyError, OSError) as exc:
        print(f"acomvar: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
