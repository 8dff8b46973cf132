import json
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyneq.errors import PreconditionError
from dyneq.problem import load_problem
from dyneq.rankmatrix import (
    NonGenericWarning,
    RankMatrix,
    constraints,
    filtration_dims,
    rank_matrix,
    reconstruct_dims,
    reduce_index,
    validate_rank_matrix,
)
from dyneq.symexpr import Sampler
from conftest import FIXTURES

CASES = [("example47", None, "example47.json"),
         ("double-chain", "p2", "double_chain_p2.json"),
         ("double-chain", "p3", "double_chain_p3.json")]

EXAMPLE47_CORE = [
    [4, 1, 1, 1, 0],
    [2, 0, 0, 0, 1],
    [1, 1, 0, 0, 0, 1],
    [0, 1, 1, 0, 0, 0, 1],
    [0, 0, 1, 1, 0, 0, 0, 1],
]


def _golden(fname) -> RankMatrix:
    return RankMatrix.from_dict(json.loads((FIXTURES / fname).read_text())["rank_matrix"])


@pytest.fixture(scope="module")
def computed():
    out = {}
    for problem, name, fname in CASES:
        with warnings.catch_warnings():
            warnings.simplefilter("error", NonGenericWarning)
            out[fname] = rank_matrix(load_problem(problem).pair(name), Sampler())
    return out


@pytest.mark.parametrize("fname", [c[2] for c in CASES])
def test_matches_golden_window(fname, computed):
    assert computed[fname].to_dict() == _golden(fname).to_dict()


def test_example47_published_entries(computed):
    rm = computed["example47.json"]
    for i, row in enumerate(EXAMPLE47_CORE):
        assert rm.window[i][: len(row)] == row
        assert all(x == 0 for x in rm.window[i][len(row):])
    assert (rm.p, rm.q, rm.r1, rm.r2) == (3, 2, 1, 1)


def test_double_chain_filtration_by_hand():
    # y1 = u2@1 - x1, y2 = x2, y3 = x3: two target differentials live on
    # states alone, the third needs the jets one level up
    pair = load_problem("double-chain").pair("p2")
    d = filtration_dims(pair, 0, 3, Sampler())
    assert [d(0, j) for j in range(4)] == [2, 2, 3, 3]
    assert d(-1, 2) == 0


@pytest.mark.parametrize("seed", [1, 1337])
@pytest.mark.parametrize("fname", [c[2] for c in CASES])
def test_seed_independence(seed, fname, computed):
    problem, name, _ = next(c for c in CASES if c[2] == fname)
    again = rank_matrix(load_problem(problem).pair(name), Sampler(seed=seed))
    assert again.window == computed[fname].window


@pytest.mark.parametrize("fname", [c[2] for c in CASES])
def test_inclusion_exclusion_recovers_dimensions(fname, computed):
    rm = computed[fname]
    partial = reconstruct_dims(rm)
    assert partial == {k: v for k, v in rm.dims.items() if k in partial}


@pytest.mark.parametrize("fname", [c[2] for c in CASES])
def test_computed_windows_validate(fname, computed):
    report = validate_rank_matrix(computed[fname])
    assert report.ok, [c.to_dict() for c in report.failures()]
    families = report.summary()
    assert families["col-sum"]["passed"] > 0 and families["row-sum"]["passed"] > 0


def test_row_and_column_sums_of_example47(computed):
    rm = computed["example47.json"]
    assert rm.row_sum(0) == rm.n2
    assert all(rm.row_sum(i) == rm.m for i in range(1, 6))
    assert rm.col_sum(0) == rm.n1
    assert all(rm.col_sum(j) == rm.m for j in range(1, 6))


def test_perturbed_window_is_rejected():
    rm = _golden("example47.json")
    rm.window[1][1] += 1
    report = validate_rank_matrix(rm)
    assert not report.ok
    names = {c.name for c in report.failures()}
    assert "row-sum" in names or "col-sum" in names


def test_all_zero_window_is_rejected():
    rm = _golden("double_chain_p2.json")
    rm.window = [[0] * rm.cols for _ in range(rm.rows)]
    assert not validate_rank_matrix(rm).ok


def test_wrong_shape_is_reported():
    rm = _golden("double_chain_p2.json")
    rm.window = rm.window[:-1]
    assert any(c.name == "shape" for c in validate_rank_matrix(rm).failures())


def test_entry_reads_tail_beyond_window():
    rm = _golden("example47.json")
    assert rm.entry(40, 40) == rm.window[3][3]
    assert rm.entry(10, 13) == rm.r1
    assert rm.entry(12, 10) == rm.r2
    assert rm.entry(0, 4) == 0
    assert rm.entry(-1, 0) == 0


def test_zero_height_has_no_rank_matrix():
    with pytest.raises(PreconditionError):
        rank_matrix(load_problem("prolong-pair").pair(), Sampler())


def test_json_round_trip():
    rm = _golden("example47.json")
    assert RankMatrix.from_dict(json.loads(json.dumps(rm.to_dict()))) == rm


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 20), st.integers(0, 20))
def test_reduce_index_is_a_diagonal_projection(p, q, i, j):
    rep = reduce_index(i, j, p, q)
    if rep is None:
        assert j > p + i or i > q + j
        return
    a, b = rep
    assert a - b == i - j
    assert a <= q + 1 and b <= p + 1
    assert reduce_index(a, b, p, q) == rep


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
def test_constraints_are_linear_and_well_indexed(p, q, margin):
    for c in constraints(p, q, 5, 5, 3, margin):
        assert c.kind in ("eq", "le")
        assert all(i >= 0 and j >= 0 for (i, j), _ in c.terms)


@pytest.mark.parametrize("problem,name,fname", CASES)
def test_diagonals_agree_with_leading_block_ranks(problem, name, fname, computed):
    from dyneq.blockmat import compute_blocks
    from dyneq.symexpr import generic_rank

    pair = load_problem(problem).pair(name)
    rm = computed[fname]
    s = Sampler()
    assert rm.window[0][rm.p] == rm.r1 == generic_rank(compute_blocks(pair, "forward", 1).leading(0), s)
    assert rm.window[rm.q][0] == rm.r2 == generic_rank(compute_blocks(pair, "backward", 1).leading(0), s)
