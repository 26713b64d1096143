import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regionopt.errors import ShapeError, SolutionParseError
from regionopt.instance import Metadata, path_length
from regionopt.solution import (Solution, check_feasible, objective, parse_and_check,
                                parse_solution, reported_objective, serialize_solution)

from helpers import PROBLEMS, corrupt, random_instance, random_solution

SQUARE = Metadata(name="sq", problem="tsp", num=4, xs=[0, 1, 1, 0], ys=[0, 0, 1, 1])


def test_square_perimeter():
    assert objective(SQUARE, Solution.tour([0, 1, 2, 3])) == 4
    # crossing order: two sides plus both diagonals (sqrt 2 rounds to 1)
    assert objective(SQUARE, Solution.tour([0, 2, 1, 3])) == 4


def test_bpp_counts_nonempty():
    m = Metadata(name="b", problem="bpp", num=3, weights=[1, 1, 1], capacity=5)
    assert objective(m, Solution("bpp", groups=[[0, 1], [2], []])) == 2


def test_mkp_negated():
    m = Metadata(name="k", problem="mkp", num=3, weights=[1, 1, 1], values=[30, 12, 5],
                 capacity=[5])
    s = Solution("mkp", groups=[[0, 1]], unassigned=[2])
    assert objective(m, s) == -42
    assert reported_objective(m, objective(m, s)) == 42


def test_shape_errors():
    with pytest.raises(ShapeError):
        objective(SQUARE, Solution("bpp", groups=[[0]]))
    with pytest.raises(ShapeError):
        objective(SQUARE, Solution.tour([0, 1, 9]))


CVRP = Metadata(name="c", problem="cvrp", num=4, depot=0, xs=[0, 1, 2, 3], ys=[0, 0, 0, 0],
                capacity=10, demand=[0, 4, 6, 5])


def test_cvrp_capacity_inclusive():
    assert check_feasible(CVRP, Solution("cvrp", routes=[(0, 1, 2, 0), (0, 3, 0)])).feasible
    r = check_feasible(CVRP, Solution("cvrp", routes=[(0, 1, 2, 3, 0)]))
    assert r.kinds() == ["capacity_exceeded"]


def test_cvrp_endpoints():
    r = check_feasible(CVRP, Solution("cvrp", routes=[(1, 2, 0), (0, 3, 0)]))
    assert r.kinds() == ["bad_endpoints"]


def test_missing_detail_text():
    m = Metadata(name="t", problem="tsp", num=9, xs=range(9), ys=[0] * 9)
    r = check_feasible(m, Solution.tour([0, 1, 2, 4, 5, 6, 8]))
    assert r.kinds() == ["missing"]
    assert r.violations[0].detail == "Missing visit node(s): 3, 7"
    assert r.violations[0].ids == (3, 7)


def test_bpp_overload():
    m = Metadata(name="b", problem="bpp", num=2, weights=[60, 50], capacity=100)
    r = check_feasible(m, Solution("bpp", groups=[[0, 1]]))
    assert r.kinds() == ["capacity_exceeded"]


def test_cvrp_objective_sums_routes():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = random_instance("cvrp", rng)
        s = random_solution(m, rng)
        assert objective(m, s) == sum(path_length(m, r, closed=True) for r in s.routes)


def test_parse_cvrp_example():
    s = parse_solution("<sol><route>0,2,3,0</route><route>0,1,5,4,0</route></sol>", "cvrp")
    assert s.routes == ((0, 2, 3, 0), (0, 1, 5, 4, 0))


def test_parse_tolerates_prose():
    text = "Sure! Here it is:\n<sol>\n <bin_0> 3, 1 </bin_0>\n <bin_1>2</bin_1>\n</sol>\nDone."
    assert parse_solution(text, "bpp").groups == ((1, 3), (2,))


def test_parse_mkp_fills_unassigned():
    s = parse_solution("<sol><knapsack_0>0,2</knapsack_0><knapsack_1></knapsack_1></sol>",
                       "mkp", num=4)
    assert s.groups == ((0, 2), ()) and s.unassigned == {1, 3}


@pytest.mark.parametrize("text", [
    "no tags here",
    "<sol><route>0,a,1</route></sol>",
    "<sol><route>0,1</sol>",
    "<sol><bin_0>1</bin_0></sol>",
    "<sol><route>0 1 2</route></sol>",
])
def test_parse_errors(text):
    with pytest.raises(SolutionParseError):
        parse_solution(text, "tsp")


def test_parse_and_check_reports_malformed():
    s, r = parse_and_check(SQUARE, "I could not solve it.")
    assert s is None and r.kinds() == ["malformed"]
    s, r = parse_and_check(SQUARE, "<sol><route>0,1,3,0</route></sol>")
    assert r.reason() == "Missing visit node(s): 2"


def test_tsp_serializer_closes_tour():
    assert serialize_solution(Solution.tour([0, 2, 1])) == "<sol>\n <route>0,2,1,0</route>\n</sol>"


def test_mkp_serializer_tags():
    text = serialize_solution(Solution("mkp", groups=[[1], [0, 2]]))
    assert "<knapsack_0>1</knapsack_0>" in text and "<knapsack_1>0,2</knapsack_1>" in text


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(PROBLEMS), st.integers(0, 2**32 - 1))
def test_round_trip(problem, seed):
    rng = np.random.default_rng(seed)
    m = random_instance(problem, rng)
    s = random_solution(m, rng)
    assert parse_solution(serialize_solution(s), problem, num=m.num) == s


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(PROBLEMS), st.integers(0, 2**32 - 1))
def test_random_solutions_feasible(problem, seed):
    rng = np.random.default_rng(seed)
    m = random_instance(problem, rng)
    assert check_feasible(m, random_solution(m, rng)).feasible


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(PROBLEMS), st.sampled_from(["missing", "duplicate", "capacity_exceeded"]),
       st.integers(0, 2**32 - 1))
def test_single_corruption_single_violation(problem, kind, seed):
    rng = np.random.default_rng(seed)
    m = random_instance(problem, rng)
    bad = corrupt(m, random_solution(m, rng), kind, rng)
    if bad is not None:
        assert check_feasible(m, bad).kinds() == [kind]
