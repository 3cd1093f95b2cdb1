import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acomvar.design import (
    Design,
    DesignProblem,
    FactorSpec,
    InteractionTerm,
    ModelSpec,
    build_model_matrix,
    enumerate_full_factorial,
    enumerate_models,
    main_effect_contrasts,
    term_block,
)

CHROMOSOME_1 = [[-1, -1, -1], [-1, 1, 1], [1, -1, -1], [1, -1, 1], [1, 1, -1], [1, 1, 1]]


def test_full_factorial_two_level_order():
    pts = enumerate_full_factorial(DesignProblem.symmetric(3, 2, 6))
    expected = [
        [-1, -1, -1],
        [-1, -1, 1],
        [-1, 1, -1],
        [-1, 1, 1],
        [1, -1, -1],
        [1, -1, 1],
        [1, 1, -1],
        [1, 1, 1],
    ]
    assert pts.tolist() == expected


def test_full_factorial_single_factor():
    assert enumerate_full_factorial([FactorSpec("A", 2)]).tolist() == [[-1], [1]]


def test_full_factorial_three_level():
    pts = enumerate_full_factorial(DesignProblem.symmetric(3, 3, 8))
    assert pts.shape == (27, 3)
    assert set(np.unique(pts)) == {-1, 0, 1}
    assert len(np.unique(pts, axis=0)) == 27


@pytest.mark.parametrize(
    "level,nl,expected",
    [(-1, 2, (-1,)), (1, 2, (1,)), (0, 3, (0, -2)), (1, 3, (1, 1)), (-1, 3, (-1, 1))],
)
def test_main_effect_contrasts(level, nl, expected):
    assert main_effect_contrasts(level, nl) == expected


def test_main_effect_contrasts_rejects_bad_level():
    with pytest.raises(ValueError):
        main_effect_contrasts(0, 2)
    with pytest.raises(ValueError):
        main_effect_contrasts(2, 3)


def test_model_counts():
    two = DesignProblem.symmetric(3, 2, 6)
    labels = [m.label(two.names) for m in enumerate_models(two)]
    assert labels == ["AB", "AC", "BC"]
    assert len(enumerate_models(DesignProblem.symmetric(3, 3, 8))) == 12
    assert len(enumerate_models(DesignProblem.symmetric(4, 2, 16, k=2))) == 15
    assert DesignProblem.symmetric(4, 2, 16, k=2).num_models == 15


def test_chromosome_model_matrix():
    problem = DesignProblem.symmetric(3, 2, 6)
    model = enumerate_models(problem)[0]
    M = build_model_matrix(Design(CHROMOSOME_1), model, problem)
    expected = [
        [1, -1, -1, -1, 1],
        [1, -1, 1, 1, -1],
        [1, 1, -1, -1, -1],
        [1, 1, -1, 1, -1],
        [1, 1, 1, -1, 1],
        [1, 1, 1, 1, 1],
    ]
    assert M.tolist() == expected


def test_full_factorial_2x2_is_orthogonal():
    problem = DesignProblem.symmetric(2, 2, 4)
    rows = enumerate_full_factorial(problem)
    M = build_model_matrix(rows, enumerate_models(problem)[0], problem)
    assert M.shape == (4, 4)
    np.testing.assert_array_equal(M.T @ M, 4 * np.eye(4))


def test_single_run_three_level_row():
    # the first interaction component is the linear contrast of (a + b) mod 3
    problem = DesignProblem(tuple(FactorSpec(n, 3) for n in "ABC"), 8)
    term = InteractionTerm(0, 1, "AB.lin")
    M = build_model_matrix([[-1, 0, 1]], ModelSpec(1, (term,)), problem)
    assert M.tolist() == [[1, -1, 1, 0, -2, 1, 1, 0]]


def test_product_coding_single_run():
    problem = DesignProblem.symmetric(3, 3, 8, coding="product")
    term = InteractionTerm(0, 1, "LL")
    M = build_model_matrix([[-1, 0, 1]], ModelSpec(1, (term,)), problem)
    assert M.tolist() == [[1, -1, 1, 0, -2, 1, 1, 0]]


def test_modular_components_span_interaction_space():
    # AB and AB^2 components together span the same space as the LL/LQ/QL/QQ products
    mod = DesignProblem.symmetric(2, 3, 9)
    prod = DesignProblem.symmetric(2, 3, 9, coding="product")
    rows = enumerate_full_factorial(mod)
    a = term_block(rows, mod)
    b = term_block(rows, prod)
    assert np.linalg.matrix_rank(np.hstack([a, b])) == 4
    # each component is orthogonal to the intercept and main effects
    from acomvar.design import main_effect_block

    np.testing.assert_array_equal(main_effect_block(rows, mod).T @ a, 0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(m=1, levels=2, n=4),
        dict(m=3, levels=2, n=4),
        dict(m=3, levels=3, n=7),
        dict(m=3, levels=2, n=8, k=0),
        dict(m=2, levels=2, n=8, k=2),
        dict(m=3, levels=4, n=8),
    ],
)
def test_problem_validation(kwargs):
    with pytest.raises(ValueError):
        DesignProblem.symmetric(**kwargs)


def test_problem_rejects_duplicate_names_and_mixed_levels():
    with pytest.raises(ValueError):
        DesignProblem((FactorSpec("A", 2), FactorSpec("A", 2), FactorSpec("B", 2)), 6)
    with pytest.raises(ValueError):
        DesignProblem((FactorSpec("A", 2), FactorSpec("B", 3), FactorSpec("C", 2)), 12)


def test_problem_minimum_runs():
    p = DesignProblem.symmetric(3, 3, 8)
    assert p.num_params == 8
    assert DesignProblem.symmetric(3, 2, 5).num_params == 5


def test_csv_round_trip_integer_and_float(tmp_path):
    d = Design([[-1, 0, 1.682], [1, -1.682, 0]], ("X", "Y", "Z"))
    path = tmp_path / "d.csv"
    d.write_csv(path)
    assert path.read_text() == "X,Y,Z\n-1,0,1.682\n1,-1.682,0\n"
    back = Design.read_csv(path)
    assert back.names == d.names
    np.testing.assert_array_equal(back.rows, d.rows)


def test_csv_errors():
    with pytest.raises(ValueError):
        Design.from_csv("")
    with pytest.raises(ValueError):
        Design.from_csv("A,B\n")
    with pytest.raises(ValueError):
        Design.from_csv("A,B\n1,2,3\n")
    with pytest.raises(ValueError):
        Design.from_csv("A,B\n1,x\n")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_row_permutation_permutes_model_matrix(seed):
    rng = np.random.default_rng(seed)
    problem = DesignProblem.symmetric(3, 3, 9)
    rows = enumerate_full_factorial(problem)[rng.choice(27, 9, replace=False)]
    perm = rng.permutation(9)
    for model in enumerate_models(problem):
        a = build_model_matrix(rows, model, problem)
        b = build_model_matrix(rows[perm], model, problem)
        np.testing.assert_array_equal(a[perm], b)
