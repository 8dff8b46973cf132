import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyneq.errors import DegenerateSampling, ParseError, SingularPoint, UnknownIdentifier
from dyneq.symexpr import (
    ONE,
    ZERO,
    Add,
    Const,
    Kind,
    Sampler,
    Scope,
    Sym,
    Variable,
    add,
    atan2,
    const,
    cos,
    differentiate,
    div,
    evaluate,
    generic_rank,
    is_identically_zero,
    mul,
    neg,
    parse_expr,
    power,
    sin,
    substitute,
    sym,
    to_string,
)

X1, X2, X3 = (Variable(f"x{i}") for i in (1, 2, 3))
U1 = Variable("u1", 0, Kind.CONTROL)
U2 = Variable("u2", 0, Kind.CONTROL)
TH = Variable("th")
CHAIN_SCOPE = Scope([X1, X2, X3], jets={"u1": (0, None), "u2": (0, None)})
PVTOL_SCOPE = Scope([TH], jets={"u1": (0, 0), "u2": (0, 0)}, constants={"e": const("1/2")})


# -- parsing -----------------------------------------------------------------

def test_parse_jet_difference():
    e = parse_expr("u2@2 - u1", CHAIN_SCOPE)
    assert isinstance(e, Add)
    assert e.free == {Variable("u2", 2), Variable("u1", 0)}
    assert e is add(sym(Variable("u2", 2)), neg(sym(U1)))


def test_parse_zero_constant():
    assert parse_expr("0", CHAIN_SCOPE) is ZERO


def test_parse_trig_dynamics():
    e = parse_expr("u1*cos(th) + e*u2*sin(th) - 1", PVTOL_SCOPE)
    expected = add(mul(sym(U1), cos(sym(TH))), mul(const("1/2"), sym(U2), sin(sym(TH))), const(-1))
    assert e is expected
    assert e.free == {U1, U2, TH}


def test_unary_minus_binds_looser_than_power():
    assert parse_expr("-x1^2", CHAIN_SCOPE) is neg(power(sym(X1), 2))


def test_negative_exponent_and_decimal():
    assert parse_expr("x1^-2", CHAIN_SCOPE) is power(sym(X1), -2)
    assert parse_expr("0.25*x1", CHAIN_SCOPE) is mul(const("1/4"), sym(X1))


def test_syntax_error_reports_position():
    with pytest.raises(ParseError) as info:
        parse_expr("x1 + * x2", CHAIN_SCOPE)
    assert info.value.position == 5


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as info:
        parse_expr("x1 + y", CHAIN_SCOPE)
    assert info.value.position == 5


def test_jet_above_declared_order_is_unknown():
    with pytest.raises(UnknownIdentifier):
        parse_expr("u1@1", PVTOL_SCOPE)


def test_unbalanced_parenthesis():
    with pytest.raises(ParseError):
        parse_expr("sin(x1", CHAIN_SCOPE)


def test_hash_consing_gives_identity():
    a = parse_expr("x1*sin(x2) + 3", CHAIN_SCOPE)
    b = parse_expr("3 + x1*sin(x2)", CHAIN_SCOPE)
    assert a is b


# -- differentiation ---------------------------------------------------------

def test_chain_rule_on_sine():
    e = mul(sym(U1), sin(sym(TH)))
    assert differentiate(e, TH) is mul(sym(U1), cos(sym(TH)))


def test_independent_variable_derivative_is_zero():
    assert differentiate(sym(X1), U1) is ZERO


def test_linear_jet_term():
    e = parse_expr("u2@2 - u1", CHAIN_SCOPE)
    assert differentiate(e, Variable("u2", 2)) is ONE


def test_quotient_and_atan2_rules(sampler):
    a, b = sym(X1), sym(X2)
    d = differentiate(atan2(a, b), X1)
    assert is_identically_zero(d - b / (a * a + b * b), sampler)
    q = differentiate(div(a, b), X2)
    assert is_identically_zero(q + a / (b * b), sampler)


# -- evaluation --------------------------------------------------------------

def test_evaluate_variable():
    assert evaluate(sym(X1), {X1: 3.5}) == 3.5


def test_evaluate_cos_at_zero():
    assert evaluate(mul(sym(U1), cos(sym(TH))), {U1: 2, TH: 0}) == 2.0


def test_evaluate_pole():
    with pytest.raises(SingularPoint):
        evaluate(div(ONE, sym(X1)), {X1: 0})


def test_evaluate_missing_variable():
    with pytest.raises(ValueError):
        evaluate(sym(X1) + sym(X2), {X1: 1.0})


# -- zero tests --------------------------------------------------------------

def test_pythagorean_identity(sampler):
    assert is_identically_zero(parse_expr("sin(th)^2 + cos(th)^2 - 1", PVTOL_SCOPE), sampler)


def test_distinct_variables_not_zero(sampler):
    assert not is_identically_zero(parse_expr("u1 - u2", CHAIN_SCOPE), sampler)


def test_binomial_identity(sampler):
    assert is_identically_zero(parse_expr("(x1+x2)^2 - x1^2 - 2*x1*x2 - x2^2", CHAIN_SCOPE), sampler)


def test_zero_short_circuit_needs_no_samples():
    assert is_identically_zero(ZERO, Sampler(trials=0))


def test_degenerate_sampling():
    # a pole everywhere in the box: 1/(x1 - x1) is never evaluable
    e = div(ONE, add(sym(X1), neg(sym(X1))))
    with pytest.raises(DegenerateSampling):
        is_identically_zero(e, Sampler(seed=1))


def test_sampler_replays_with_same_seed():
    a = Sampler(seed=7).draw([X1, X2])
    b = Sampler(seed=7).draw([X2, X1])
    assert all(np.array_equal(a[v], b[v]) for v in (X1, X2))
    c = Sampler(seed=8).draw([X1, X2])
    assert not np.array_equal(a[X1], c[X1])


def test_box_override_is_respected():
    draws = Sampler(seed=3, trials=50).draw([X1], boxes={X1: (3.0, 4.0)})
    assert draws[X1].min() >= 3.0 and draws[X1].max() <= 4.0


# -- generic rank ------------------------------------------------------------

def test_rank_of_identity():
    eye = [[ONE if i == j else ZERO for j in range(3)] for i in range(3)]
    assert generic_rank(eye, Sampler()) == 3


def test_rank_of_proportional_rows():
    u1, u2 = sym(U1), sym(U2)
    assert generic_rank([[u1, u2], [2 * u1, 2 * u2]], Sampler()) == 1


def test_rank_of_pvtol_control_jacobian():
    th, e = sym(TH), const("1/2")
    jac = [[neg(sin(th)), e * cos(th)], [cos(th), e * sin(th)], [ZERO, ONE]]
    assert generic_rank(jac, Sampler()) == 2
    # independent check: the top 2x2 minor is -e at any angle
    t = 0.3
    assert math.isclose(-math.sin(t) * 0.5 * math.sin(t) - 0.5 * math.cos(t) * math.cos(t), -0.5)


# -- properties --------------------------------------------------------------

VARS = [X1, X2, X3]


def _expr_strategy(with_div: bool):
    leaves = st.one_of(
        st.sampled_from([sym(v) for v in VARS]),
        st.integers(-3, 3).map(const),
    )

    def extend(children):
        ops = [
            st.tuples(children, children).map(lambda ab: add(*ab)),
            st.tuples(children, children).map(lambda ab: mul(*ab)),
            st.tuples(children, children).map(lambda ab: add(ab[0], neg(ab[1]))),
            children.map(sin),
            children.map(cos),
            st.tuples(children, st.integers(2, 3)).map(lambda bn: power(*bn)),
        ]
        if with_div:
            ops.append(st.tuples(children, children).map(
                lambda ab: div(ab[0], add(const(2), power(ab[1], 2)))))
            ops.append(st.tuples(children, children).map(
                lambda ab: atan2(ab[0], add(const(3), power(ab[1], 2)))))
        return st.one_of(*ops)

    return st.recursive(leaves, extend, max_leaves=8)


EXPRS = _expr_strategy(with_div=True)


@settings(max_examples=60, deadline=None)
@given(EXPRS, EXPRS, st.sampled_from(VARS))
def test_differentiation_is_linear(e1, e2, v):
    lhs = differentiate(add(e1, e2), v)
    rhs = add(differentiate(e1, v), differentiate(e2, v))
    assert is_identically_zero(add(lhs, neg(rhs)), Sampler(seed=5))


@settings(max_examples=60, deadline=None)
@given(EXPRS, st.sampled_from(VARS), st.integers(0, 2**32 - 1))
def test_derivative_matches_central_differences(e, v, seed):
    d = differentiate(e, v)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        pt = {w: float(rng.uniform(-2, 2)) for w in VARS}
        h = 1e-6 * max(1.0, abs(pt[v]))
        hi, lo = dict(pt), dict(pt)
        hi[v] += h
        lo[v] -= h
        fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
        exact = evaluate(d, pt)
        scale = max(1.0, abs(exact), abs(evaluate(e, pt)))
        assert abs(fd - exact) <= 1e-5 * scale


@settings(max_examples=80, deadline=None)
@given(EXPRS)
def test_printing_round_trips(e):
    scope = Scope(VARS)
    assert parse_expr(to_string(e), scope) is e


@settings(max_examples=40, deadline=None)
@given(EXPRS, EXPRS)
def test_substitution_then_evaluation_commutes(e, g):
    pt = {X1: 0.3, X2: -1.1, X3: 0.7}
    composed = substitute(e, {X1: g})
    direct = evaluate(e, {**pt, X1: evaluate(g, pt)})
    assert math.isclose(evaluate(composed, pt), direct, rel_tol=1e-9, abs_tol=1e-9)


def test_const_and_sym_node_types():
    assert isinstance(const(2), Const)
    assert isinstance(sym(X1), Sym)


def test_zero_verdicts_agree_across_seeds():
    from dyneq.equivmap import contact_residuals, roundtrip_residuals
    from dyneq.problem import load_problem

    for name in ("example47", "double-chain", "pvtol", "single-control"):
        prob = load_problem(name)
        for pair in prob.pairs.values():
            exprs = [*contact_residuals(pair.phi), *roundtrip_residuals(pair.phi, pair.psi)]
            boxes = pair.phi.source.box_map
            verdicts = {tuple(is_identically_zero(e, Sampler(seed=seed), boxes) for e in exprs)
                        for seed in (1, 42, 1337)}
            assert len(verdicts) == 1
