import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vblin.exprlang import (
    Add, Call, CompiledExpr, Const, Div, ExprDomainError, ExprSyntaxError, Mul, Neg, Pow,
    Sub, UnboundVariableError, UnknownFunctionError, Var, eval_text, evaluate, free_vars,
    parse, to_string,
)


def horner(coeffs, x):
    acc = 0.0
    for c in coeffs:
        acc = acc * x + c
    return acc


class TestParse:
    def test_precedence(self):
        assert parse("1+2*3") == Add(Const(1), Mul(Const(2), Const(3)))
        assert parse("(1+2)*3") == Mul(Add(Const(1), Const(2)), Const(3))

    def test_left_associative_minus_and_div(self):
        assert parse("a-b-c") == Sub(Sub(Var("a"), Var("b")), Var("c"))
        assert parse("a/b/c") == Div(Div(Var("a"), Var("b")), Var("c"))

    def test_power_binds_tighter_than_unary_minus(self):
        assert parse("-2^2") == Neg(Pow(Const(2), 2.0))
        assert eval_text("-2^2", {}) == -4.0

    def test_power_right_associative_with_constant_exponents(self):
        assert parse("x^2^3") == Pow(Var("x"), 8.0)
        assert parse("x^-1") == Pow(Var("x"), -1.0)

    def test_variable_exponent_rejected(self):
        with pytest.raises(ExprSyntaxError) as err:
            parse("x^y")
        assert err.value.offset == 1

    def test_function_call(self):
        assert parse("sin(x)") == Call("sin", Var("x"))

    @pytest.mark.parametrize("text,offset", [("2x", 1), ("(u+v", 4), ("u+", 2), ("u $ v", 2), ("", 0)])
    def test_syntax_error_offsets(self, text, offset):
        with pytest.raises(ExprSyntaxError) as err:
            parse(text)
        assert err.value.offset == offset

    def test_unknown_function(self):
        with pytest.raises(UnknownFunctionError) as err:
            parse("1+tan(x)")
        assert err.value.offset == 2

    def test_non_ascii(self):
        with pytest.raises(ExprSyntaxError) as err:
            parse("x+π")
        assert err.value.offset == 2

    def test_numbers(self):
        assert parse("1.5e-3") == Const(1.5e-3)
        assert parse(".25") == Const(0.25)
        assert parse("3.") == Const(3.0)


class TestPrint:
    @pytest.mark.parametrize("text,expected", [
        ("(a+b)+c", "a+b+c"),
        ("a+(b+c)", "a+(b+c)"),
        ("a-(b-c)", "a-(b-c)"),
        ("(a*b)*c", "a*b*c"),
        ("a/(b*c)", "a/(b*c)"),
        ("-(a+b)", "-(a+b)"),
        ("(-a)^2", "(-a)^2"),
        ("x^(-2)", "x^(-2)"),
        ("2.0*x", "2*x"),
        ("sin((x))", "sin(x)"),
    ])
    def test_minimal_parentheses(self, text, expected):
        assert to_string(parse(text)) == expected


names = st.sampled_from(["u", "v", "x", "x1"])
leaves = st.one_of(
    st.builds(Const, st.integers(0, 9).map(float)),
    st.builds(Var, names),
)


def _trees(children):
    return st.one_of(
        st.builds(Add, children, children),
        st.builds(Sub, children, children),
        st.builds(Mul, children, children),
        st.builds(Div, children, children),
        st.builds(Neg, children),
        st.builds(Pow, children, st.sampled_from([2.0, 3.0, -1.0, 0.5])),
        st.builds(Call, st.sampled_from(["sin", "cos", "exp", "abs", "sqrt"]), children),
    )


trees = st.recursive(leaves, _trees, max_leaves=8)


@given(trees)
def test_print_parse_roundtrip(tree):
    assert parse(to_string(tree)) == tree


@given(trees)
def test_print_is_idempotent(tree):
    s = to_string(tree)
    assert to_string(parse(s)) == s


class TestEvaluate:
    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=6), st.floats(-2, 2))
    def test_polynomial_against_horner(self, coeffs, x):
        n = len(coeffs) - 1
        text = "+".join(f"({c})*x^{n - i}" for i, c in enumerate(coeffs))
        assert eval_text(text, {"x": x}) == pytest.approx(horner(coeffs, x), abs=1e-12, rel=1e-12)

    def test_functions_match_math(self):
        x = 0.37
        for fn in ("sin", "cos", "exp", "sqrt"):
            assert eval_text(f"{fn}(x)", {"x": x}) == pytest.approx(getattr(math, fn)(x), rel=1e-15)
        assert eval_text("abs(x)", {"x": -x}) == x

    def test_vectorized(self):
        xs = np.linspace(-1, 1, 7)
        out = eval_text("x^3-2*x", {"x": xs})
        np.testing.assert_allclose(out, xs ** 3 - 2 * xs)

    def test_scalar_env_returns_float(self):
        assert isinstance(eval_text("1+2", {}), float)

    def test_unbound(self):
        with pytest.raises(UnboundVariableError):
            eval_text("x+y", {"x": 1.0})

    @pytest.mark.parametrize("text,env", [
        ("1/x", {"x": 0.0}),
        ("x^-2", {"x": 0.0}),
        ("x^0.5", {"x": -1.0}),
        ("sqrt(x)", {"x": -1.0}),
        ("exp(x)", {"x": 1000.0}),
    ])
    def test_domain_errors(self, text, env):
        with pytest.raises(ExprDomainError):
            eval_text(text, env)

    def test_abs_base_allows_fractional_power(self):
        assert eval_text("abs(u)^0.6", {"u": -2.0}) == pytest.approx(2.0 ** 0.6)

    def test_domain_error_in_array(self):
        with pytest.raises(ExprDomainError):
            eval_text("1/x", {"x": np.array([1.0, 0.0])})


def test_free_vars():
    assert free_vars(parse("sin(u)*v+2")) == {"u", "v"}


def test_compiled_expr():
    f = CompiledExpr("u*v+1", ["u", "v"])
    pts = np.array([[1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_allclose(f(pts), [3.0, -2.0])
    assert f(np.array([2.0, 2.0])).shape == (1,)
    np.testing.assert_allclose(CompiledExpr("2", ["u"])(np.zeros((3, 1))), [2, 2, 2])
    with pytest.raises(UnboundVariableError):
        CompiledExpr("u*w", ["u", "v"])


def test_evaluate_on_ast():
    assert evaluate(Pow(Var("x"), 2.0), {"x": 3.0}) == 9.0
