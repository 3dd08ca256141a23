import numpy as np
import pytest

from errors import DomainEvaluationError, ExpressionSyntaxError, UnknownIdentifierError
from parsers.expression import BinOp, Call, Neg, Num, Var, bind, evaluate, parse, to_source


def test_precedence_and_power_right_associative():
    assert evaluate(parse("1 + 2*3"), {}) == 7.0
    assert evaluate(parse("2^3^2"), {}) == 512.0
    assert evaluate(parse("-x^2"), {'x': 3.0}) == -9.0


def test_tree_shape():
    tree = parse("0.5*x + sin(y)")
    assert tree == BinOp('+', BinOp('*', Num(0.5), Var('x')), Call('sin', (Var('y'),)))
    assert parse("-x") == Neg(Var('x'))


def test_vectorised_evaluation():
    x = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(evaluate(parse("max(x, 0) + tanh(x)"), {'x': x}), np.maximum(x, 0) + np.tanh(x))


def test_source_reparses_to_same_tree():
    tree = parse("exp(-1/(1 - x^2)) * min(y, z) - t")
    assert parse(to_source(tree)) == tree


def test_missing_close_paren_reports_offset():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("tanh(x")
    assert info.value.offset == 7
    assert info.value.expected == [')']


def test_dangling_operator():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("x +")
    assert info.value.offset == 4


def test_empty_source():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("")
    assert info.value.offset == 1


def test_bad_character():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("x $ 1")
    assert info.value.offset == 3


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as info:
        parse("q + 1")
    assert info.value.name == 'q'
    assert info.value.offset == 1
    with pytest.raises(UnknownIdentifierError):
        parse("foo(x)")


def test_function_needs_call_syntax():
    with pytest.raises(ExpressionSyntaxError):
        parse("sin + 1")


def test_division_by_zero_reports_point():
    with pytest.raises(DomainEvaluationError) as info:
        evaluate(parse("1/x"), {'x': np.array([1.0, 0.0, 2.0])})
    assert info.value.point == {'x': 0.0}


def test_sqrt_of_negative():
    with pytest.raises(DomainEvaluationError):
        evaluate(parse("sqrt(x)"), {'x': -1.0})


def test_unbound_variable():
    with pytest.raises(KeyError):
        evaluate(parse("x + y"), {'x': 1.0})


def test_bind_rejects_disallowed_variable():
    tree = parse("y + z")
    with pytest.raises(UnknownIdentifierError) as info:
        bind(tree, ('t', 'x', 'y'), slot='b', source="y + z")
    assert info.value.slot == 'b'
    assert info.value.offset == 5
    assert bind(parse("x"), ('x',)) == Var('x')


def test_overflowing_literal_rejected():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("x + 1e999")
    assert info.value.offset == 5
    assert info.value.expected == ['finite number']
    tree = parse("1e308 * x")
    assert parse(to_source(tree)) == tree
