import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kccjacobi.errors import DomainWarning, EvalError, ExprSyntaxError, SemanticError
from kccjacobi.expr import (
    Binary,
    Const,
    Param,
    Unary,
    Var,
    add,
    differentiate,
    evaluate,
    mul,
    parse_expression,
    parse_model,
    to_source,
)


# --- parse_model -----------------------------------------------------------

def test_minimal_model():
    m = parse_model("dim 1\nx1' = -x1")
    assert m.n == 1
    assert m.components == (Unary("neg", Var(1)),)


def test_model_with_param():
    m = parse_model("dim 2\nparam a 2.0\nx1' = a*x2\nx2' = -x1")
    assert m.n == 2
    assert dict(m.params) == {"a": 2.0}
    assert m.components[0] == Binary("mul", Param("a"), Var(2))
    assert m([1.0, 3.0]) == [6.0, -1.0]


def test_variable_out_of_range():
    with pytest.raises(SemanticError):
        parse_model("dim 2\nx1' = x3")


def test_comments_blank_lines_and_indentation():
    src = """
    # header comment
    dim 2   # trailing comment

      param k -1.5e0
    x2' = k * x1   # out of order is fine
    x1' = x2
    """
    m = parse_model(src)
    assert m([2.0, 5.0]) == [5.0, -3.0]


@pytest.mark.parametrize(
    "src",
    [
        "x1' = 1\ndim 1",  # component before dim
        "dim 1\ndim 1\nx1' = 1",
        "dim 2\nx1' = 1",  # missing x2'
        "dim 1\nx1' = 1\nx1' = 2",
        "dim 1\nx1' = b",  # undeclared parameter
        "dim 1\nparam a 1\nparam a 2\nx1' = a",
        "dim 1\nparam x1 3\nx1' = 1",
        "dim 1\nx1' = abs(x1)",  # non-smooth
        "dim 1\nx1' = foo(x1)",
        "dim 0",
        "dim 1\nx2' = 1",
        "x1' = 1",
    ],
)
def test_semantic_errors(src):
    with pytest.raises(SemanticError):
        parse_model(src)


def test_syntax_error_location():
    with pytest.raises(ExprSyntaxError) as info:
        parse_model("dim 1\nx1' = 2 * $x1")
    assert info.value.line == 2
    assert info.value.column == 11


@pytest.mark.parametrize(
    "src",
    ["dim one\nx1' = 1", "dim 1\nparam a 0x10\nx1' = a", "dim 1\nbogus line", "dim 1\nx1' = 1_000"],
)
def test_syntax_errors(src):
    with pytest.raises(ExprSyntaxError):
        parse_model(src)


def test_model_to_source_round_trip():
    m = parse_model("dim 2\nparam c 0.2\nx1' = x2\nx2' = -sin(x1) - c*x2")
    again = parse_model(m.to_source())
    x = [0.3, -1.1]
    assert again(x) == m(x)


# --- parse_expression ------------------------------------------------------

def test_precedence_add_mul():
    assert parse_expression("x1 + 2*x2", 2) == Binary("add", Var(1), Binary("mul", Const(2.0), Var(2)))


def test_unary_minus_looser_than_pow():
    assert parse_expression("-x1^2", 1) == Unary("neg", Binary("pow", Var(1), Const(2.0)))


def test_pow_right_associative():
    e = parse_expression("x1^2^3", 1)
    assert e == Binary("pow", Var(1), Const(8.0))
    assert evaluate(parse_expression("2^3^2", 1), [0.0]) == 512.0


def test_negative_exponent_and_functions():
    e = parse_expression("x1^-2 + exp(-x1) * tanh(x1)", 1)
    x = 0.7
    assert evaluate(e, [x]) == pytest.approx(x**-2 + math.exp(-x) * math.tanh(x), rel=1e-15)


def test_literal_folding():
    assert parse_expression("2*3 + 1", 1) == Const(7.0)
    # domain errors are not folded away
    e = parse_expression("ln(0)", 1)
    assert isinstance(e, Unary)
    with pytest.raises(EvalError):
        evaluate(e, [1.0])


@pytest.mark.parametrize("src", ["0*ln(x1)", "sqrt(x1)*0", "0/x1", "ln(x1)^0"])
def test_absorbing_identities_keep_domain_errors(src):
    with pytest.raises(EvalError):
        evaluate(parse_expression(src, 1), [-1.0 if "0/" not in src else 0.0])


def test_absorbing_identities_on_total_subtrees():
    assert parse_expression("0*sin(x1*x2)", 2) == Const(0.0)
    assert parse_expression("(x1+x2)^0", 2) == Const(1.0)


@pytest.mark.parametrize("src", ["sin(x1", "x1 +", "", "(x1))", "sin x1", "x1 x1", "2 ** x1"])
def test_expression_syntax_errors(src):
    with pytest.raises(ExprSyntaxError):
        parse_expression(src, 1)


def test_unknown_identifier():
    with pytest.raises(SemanticError):
        parse_expression("y1", 1)


# --- evaluate ----------------------------------------------------------------

def test_evaluate_examples():
    assert evaluate(parse_expression("x1+2*x2", 2), [1.0, 3.0]) == 7.0
    assert evaluate(parse_expression("exp(0)", 1), [0.0]) == 1.0


@pytest.mark.parametrize("src,x", [("sqrt(x1)", -1.0), ("ln(x1)", 0.0), ("1/x1", 0.0), ("x1^0.5", -2.0),
                                   ("exp(x1)", 1000.0)])
def test_evaluate_domain_errors(src, x):
    e = parse_expression(src, 1)
    with pytest.raises(EvalError) as info:
        evaluate(e, [x])
    assert info.value.node is not None


# --- differentiate -----------------------------------------------------------

def test_derivative_examples():
    assert differentiate(parse_expression("x1*x2", 2), 1) == Var(2)
    assert differentiate(parse_expression("sin(x1)", 1), 1) == Unary("cos", Var(1))
    assert differentiate(Const(5.0), 2) == Const(0.0)


def _num_diff(e, x, i, h=1e-6):
    xp, xm = list(x), list(x)
    xp[i - 1] += h
    xm[i - 1] -= h
    return (evaluate(e, xp) - evaluate(e, xm)) / (2 * h)


@pytest.mark.parametrize(
    "src",
    ["tan(x1)*x2", "sqrt(x1*x2)", "ln(x1+x2)", "x1^x2", "2^x1", "x2/x1", "tanh(x1-x2)", "cos(x1)^3",
     "exp(x1*x2)", "(x1+1)^(x2/2)"],
)
def test_derivatives_against_central_differences(src):
    e = parse_expression(src, 2)
    x = [0.8, 1.3]
    for i in (1, 2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DomainWarning)
            d = differentiate(e, i)
        assert evaluate(d, x) == pytest.approx(_num_diff(e, x, i), rel=1e-7, abs=1e-8)


def test_domain_warning_flag():
    with pytest.warns(DomainWarning):
        differentiate(parse_expression("ln(x1)", 1), 1)
    with pytest.warns(DomainWarning):
        differentiate(parse_expression("sqrt(x1)", 1), 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error", DomainWarning)
        differentiate(parse_expression("x1*x2 + sin(x2)", 2), 1)


# --- properties --------------------------------------------------------------

N_VARS = 3
_leaves = st.one_of(
    st.integers(1, N_VARS).map(Var),
    st.floats(-3, 3, allow_nan=False, allow_infinity=False).map(Const),
)


def _smooth_trees(children):
    return st.one_of(
        st.tuples(st.sampled_from(["neg", "sin", "cos", "tanh"]), children).map(lambda t: Unary(*t)),
        st.tuples(st.sampled_from(["add", "sub", "mul"]), children, children).map(lambda t: Binary(*t)),
        st.tuples(children, st.integers(2, 3)).map(lambda t: Binary("pow", t[0], Const(float(t[1])))),
    )


smooth_exprs = st.recursive(_leaves, _smooth_trees, max_leaves=12)


def _all_trees(children):
    return st.one_of(
        _smooth_trees(children),
        st.tuples(st.sampled_from(["exp", "ln", "sqrt", "tan"]), children).map(lambda t: Unary(*t)),
        st.tuples(st.just("div"), children, children).map(lambda t: Binary(*t)),
    )


any_exprs = st.recursive(_leaves, _all_trees, max_leaves=12)


def _close(a, b, rel):
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def _points(seed, count=100):
    return np.random.default_rng(seed).uniform(-2, 2, size=(count, N_VARS))


def _try(e, x):
    try:
        return evaluate(e, x)
    except EvalError:
        return None


@settings(max_examples=60, deadline=None)
@given(any_exprs, st.integers(0, 2**32 - 1))
def test_print_parse_round_trip(e, seed):
    back = parse_expression(to_source(e), N_VARS)
    for x in _points(seed):
        a, b = _try(e, x), _try(back, x)
        if a is None or b is None:
            assert a is None and b is None
        else:
            assert abs(a - b) <= 1e-15 * max(abs(a), abs(b)) or a == b


@settings(max_examples=60, deadline=None)
@given(smooth_exprs, smooth_exprs, st.floats(-3, 3), st.integers(1, N_VARS), st.integers(0, 2**32 - 1))
def test_derivative_linearity(e1, e2, a, i, seed):
    lhs = differentiate(add(mul(Const(a), e1), e2), i)
    d1, d2 = differentiate(e1, i), differentiate(e2, i)
    for x in _points(seed, 20):
        left = evaluate(lhs, x)
        right = a * evaluate(d1, x) + evaluate(d2, x)
        assert _close(left, right, 1e-12)


@settings(max_examples=60, deadline=None)
@given(smooth_exprs, st.integers(1, N_VARS), st.integers(1, N_VARS), st.integers(0, 2**32 - 1))
def test_mixed_partials_commute(e, j, k, seed):
    djk = differentiate(differentiate(e, k), j)
    dkj = differentiate(differentiate(e, j), k)
    for x in _points(seed, 20):
        assert _close(evaluate(djk, x), evaluate(dkj, x), 1e-10)
