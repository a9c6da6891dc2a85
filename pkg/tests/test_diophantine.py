import random

import pytest
from brute import brute_hilbert_basis, brute_minimal_solutions
from hypothesis import given, settings
from hypothesis import strategies as st

from tgvas.diophantine import (NotHomogeneous, SystemBuilder, hilbert_basis, homogeneous_support,
                               minimal_solution, minimal_solutions, pottier_bound, solve_one,
                               system_from_matrix, variable_boundedness)


def rows(sols, names):
    return sorted(tuple(s[v] for v in names) for s in sols)


@pytest.mark.parametrize("matrix, expected", [
    ([[3, -1]], 7),
    ([[1]], 2),
    ([[2, 0, 1], [0, 1, -1]], 49),
])
def test_pottier_bound(matrix, expected):
    assert pottier_bound(system_from_matrix(matrix)) == expected


def test_minimal_solutions_examples():
    sys = system_from_matrix([[1, -1]])
    assert rows(minimal_solutions(sys), sys.variables) == [(1, 1)]
    sys = system_from_matrix([[2, -3]])
    assert rows(minimal_solutions(sys), sys.variables) == [(3, 2)]
    sys = system_from_matrix([[1, 1]], [2])
    assert rows(minimal_solutions(sys), sys.variables) == [(0, 2), (1, 1), (2, 0)]


def test_hilbert_basis_examples():
    basis = hilbert_basis(system_from_matrix([[1, -1]]))
    assert basis.elements == ((1, 1),) and basis.sum_vector == (1, 1)
    basis = hilbert_basis(system_from_matrix([[1, 1, -2]]))
    assert sorted(basis.elements) == [(0, 2, 1), (1, 1, 1), (2, 0, 1)]
    assert sorted(basis.elements) == brute_minimal_solutions([[1, 1, -2]], 7)
    empty = hilbert_basis(system_from_matrix([[1, 1]]))
    assert empty.elements == () and empty.sum_vector == (0, 0)


def test_hilbert_basis_needs_homogeneous_input():
    with pytest.raises(NotHomogeneous):
        hilbert_basis(system_from_matrix([[1, 1]], [2]))


def test_solve_one_examples():
    b = SystemBuilder()
    b.variable("x")
    b.fix("x", 3)
    assert solve_one(b.build()) == {"x": 3}
    b = SystemBuilder()
    b.variable("x", lower=1)
    b.variable("y")
    b.equation([("x", 1), ("y", -1)], 1)
    assert solve_one(b.build()) == {"x": 1, "y": 0}
    assert solve_one(system_from_matrix([[2]], [3])) is None


def test_solve_one_is_lexicographically_least():
    sys = system_from_matrix([[1, 1, 1]], [3])
    assert solve_one(sys) == {"x1": 0, "x2": 0, "x3": 3}


def test_boundedness_examples():
    sys = system_from_matrix([[1, -1]])
    assert variable_boundedness(sys, hilbert_basis(sys)) == {"x1": False, "x2": False}
    b = SystemBuilder()
    b.fix("x", 5)
    b.equation([("y", 1), ("z", -1)])
    sys = b.build()
    hom = sys.homogeneous()
    assert variable_boundedness(hom, hilbert_basis(hom)) == {"x": True, "y": False, "z": False}
    support = homogeneous_support(sys)
    assert support.unbounded == {"y", "z"}


def random_homogeneous(rng):
    n, m = rng.randint(1, 4), rng.randint(1, 3)
    return [[rng.randint(-3, 3) for _ in range(n)] for _ in range(m)]


@pytest.mark.parametrize("seed", range(40))
def test_support_agrees_with_hilbert_basis(seed):
    rng = random.Random(seed)
    matrix = random_homogeneous(rng)
    sys = system_from_matrix(matrix)
    basis = hilbert_basis(sys)
    expected = {v for v, bounded in variable_boundedness(sys, basis).items() if not bounded}
    support = homogeneous_support(sys)
    assert support.unbounded == expected
    assert sys.satisfied_by(support.witness)
    assert all(support.witness[v] > 0 for v in expected)


coefficient_rows = st.lists(st.lists(st.integers(-3, 3), min_size=3, max_size=3), min_size=1, max_size=2)


@settings(max_examples=60, deadline=None)
@given(coefficient_rows, st.lists(st.integers(0, 4), min_size=2, max_size=2))
def test_minimal_solutions_are_sound_and_incomparable(matrix, rhs):
    sys = system_from_matrix(matrix, rhs[:len(matrix)])
    sols = minimal_solutions(sys)
    vectors = rows(sols, sys.variables)
    for s in sols:
        assert sys.satisfied_by(s)
    for a in vectors:
        for b in vectors:
            if a != b:
                assert not all(x <= y for x, y in zip(a, b))


@settings(max_examples=60, deadline=None)
@given(coefficient_rows, st.lists(st.integers(0, 4), min_size=2, max_size=2))
def test_feasibility_verdicts_agree(matrix, rhs):
    sys = system_from_matrix(matrix, rhs[:len(matrix)])
    found = minimal_solutions(sys)
    best = minimal_solution(sys)
    if sys.is_homogeneous:
        # zero is left out of minimal sets by convention but is the least solution
        assert best == {v: 0 for v in sys.variables}
        return
    assert (best is None) == (not found)
    if best is not None:
        assert sys.satisfied_by(best)
        assert sum(best.values()) == min(sum(s.values()) for s in found)


def test_infeasible_system_that_fools_presolve():
    sys = system_from_matrix([[1, 2, 2], [1, 1, 1]], [1, 0])
    assert minimal_solution(sys) is None
    assert minimal_solutions(sys) == []


@pytest.mark.parametrize("seed", range(30))
def test_box_search_agrees_with_plain_grid(seed):
    rng = random.Random(seed)
    matrix = random_homogeneous(rng)
    basis, box = brute_hilbert_basis(matrix)
    if (box + 1) ** len(matrix[0]) <= 200_000:
        assert basis == brute_minimal_solutions(matrix, box)
    assert basis == sorted(hilbert_basis(system_from_matrix(matrix)).elements)
