import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invcurate.predicate import (
    Binary,
    BoolLit,
    Cast,
    DivisionByZero,
    IntLit,
    PredicateSyntaxError,
    SideEffectError,
    Ternary,
    UnboundVariable,
    Unary,
    Var,
    check_no_side_effects,
    eval_expr,
    expr_metrics,
    free_vars,
    parse_predicate,
    print_minimal,
    tokenize,
)

import corpus
from gen import preds
from oracle import c_parse_expr, env_grid, grid_eval


def B(op, a, b):
    return Binary(op, a, b)


x, y, a, b, c = (Var(n) for n in "xyabc")


class TestParse:
    def test_running_example_invariant(self):
        e = parse_predicate(corpus.RUNNING_V2)
        assert e == B("==", B("+", B("*", IntLit(5), x), B("*", IntLit(3), y)), IntLit(300))

    def test_atom(self):
        assert parse_predicate("x") == x

    def test_equality_is_left_associative(self):
        e = parse_predicate("a == b == c")
        assert e == B("==", B("==", a, b), c)
        assert e == c_parse_expr("a == b == c")

    def test_ternary_is_right_associative(self):
        e = parse_predicate("a ? b : c ? x : y")
        assert e == Ternary(a, b, Ternary(c, x, y))

    def test_cast_binds_to_unary_operand(self):
        e = parse_predicate("((long long) weight1 + weight2) <= max_threshold")
        assert e == B("<=", B("+", Cast("long long", Var("weight1")), Var("weight2")), Var("max_threshold"))

    def test_literal_forms(self):
        assert parse_predicate("0x1F") == IntLit(31)
        assert parse_predicate("010") == IntLit(8)
        assert parse_predicate("42UL") == IntLit(42)
        assert parse_predicate("true") == BoolLit(True)

    def test_unary_plus_is_dropped(self):
        assert parse_predicate("+x") == x

    def test_negative_literal_is_unary(self):
        assert parse_predicate("-3") == Unary("-", IntLit(3))

    @pytest.mark.parametrize("text", ["x +", "(x", "x y", "f(x)", "x & y", "x << 1", "", "a[0]"])
    def test_syntax_errors(self, text):
        with pytest.raises(PredicateSyntaxError):
            parse_predicate(text)

    def test_error_carries_position(self):
        with pytest.raises(PredicateSyntaxError) as info:
            parse_predicate("x + * y")
        assert info.value.position == 4

    @pytest.mark.parametrize("text", ["q += a", "i++", "--i", "x = 1", "x -= 1", "a = b == c"])
    def test_side_effects_rejected(self, text):
        with pytest.raises(SideEffectError):
            parse_predicate(text)


class TestSideEffectCheck:
    @pytest.mark.parametrize("text,ok", [
        ("x += 1", False), ("x == 1", True), ("a = b == c", False),
        ("x <= y && y >= z && a != b", True), ("i--", False), ("x *= 2", False),
    ])
    def test_examples(self, text, ok):
        assert check_no_side_effects(text) is ok

    def test_comments_and_strings_are_skipped(self):
        kinds = [t.kind for t in tokenize('x /* y++ */ + "a=b"')]
        assert "str" in kinds


class TestPrint:
    def test_disjunctive_form_has_no_parens(self):
        e = parse_predicate("((36 <= y) && (36 <= x)) || ((21 <= y) && (45 <= x))")
        assert print_minimal(e) == "36 <= y && 36 <= x || 21 <= y && 45 <= x"

    def test_atom(self):
        assert print_minimal(x) == "x"

    def test_needed_parens_kept(self):
        assert print_minimal(B("*", B("+", a, b), c)) == "(a + b)*c"
        assert print_minimal(B("-", a, B("-", b, c))) == "a - (b - c)"
        assert print_minimal(B("-", B("-", a, b), c)) == "a - b - c"

    def test_spacing_convention(self):
        assert print_minimal(parse_predicate("5 * x+3*y==300")) == "5*x + 3*y == 300"
        assert print_minimal(parse_predicate("a / b % c")) == "a/b%c"

    def test_double_negation_does_not_lex_as_decrement(self):
        e = Unary("-", Unary("-", x))
        assert print_minimal(e) == "-(-x)"
        assert parse_predicate(print_minimal(e)) == e

    def test_c_literals(self):
        assert print_minimal(B("&&", BoolLit(True), x), c_literals=True) == "1 && x"


class TestEval:
    def test_running_example_initial_state(self):
        assert eval_expr(parse_predicate(corpus.RUNNING_V2), {"x": 0, "y": 100}) == 1

    def test_false_literal(self):
        assert eval_expr(BoolLit(False), {}) == 0

    def test_truth_table(self):
        e = parse_predicate("(a && b) || c")
        for va, vb, vc in itertools.product((0, 1), repeat=3):
            assert eval_expr(e, {"a": va, "b": vb, "c": vc}) == int((va and vb) or vc)

    @pytest.mark.parametrize("text,val", [
        ("-7 / 2", -3), ("7 / -2", -3), ("-7 % 2", -1), ("7 % -2", 1), ("(int)5", 5),
        ("3 > 2 ? 10 : 20", 10), ("!5", 0), ("2 && 3", 1),
    ])
    def test_c_semantics(self, text, val):
        assert eval_expr(parse_predicate(text), {}) == val

    def test_short_circuit_avoids_division(self):
        e = parse_predicate("y != 0 && x / y > 1")
        assert eval_expr(e, {"x": 5, "y": 0}) == 0

    def test_errors(self):
        with pytest.raises(DivisionByZero):
            eval_expr(parse_predicate("x / 0"), {"x": 1})
        with pytest.raises(UnboundVariable):
            eval_expr(x, {})

    def test_arbitrary_precision(self):
        assert eval_expr(parse_predicate("x * x"), {"x": 10**20}) == 10**40


class TestMetrics:
    def test_running_invariant(self):
        m = expr_metrics(parse_predicate(corpus.RUNNING_V2))
        assert (m.char_length, m.num_disjuncts, m.num_conjuncts) == (16, 1, 1)

    def test_atom(self):
        m = expr_metrics(x)
        assert (m.char_length, m.num_disjuncts) == (1, 1)

    def test_range_disjuncts(self):
        m = expr_metrics(parse_predicate(corpus.RANGE_V0))
        assert m.num_disjuncts == 7
        assert m.num_conjuncts == 14

    def test_free_vars(self):
        assert free_vars(parse_predicate("x + (int)y > z ? 1 : w")) == {"x", "y", "z", "w"}


@settings(max_examples=300, deadline=None)
@given(preds)
def test_round_trip(e):
    text = print_minimal(e)
    assert parse_predicate(text) == e
    assert c_parse_expr(text) == e


@settings(max_examples=200, deadline=None)
@given(preds, st.tuples(*[st.integers(-6, 6)] * 4))
def test_eval_matches_grid_oracle(e, vals):
    env = dict(zip(("w", "x", "y", "z"), vals))
    grid = {k: np.array([v], dtype=object) for k, v in env.items()}
    want, defined = grid_eval(e, grid, 1)
    if defined[0]:
        assert eval_expr(e, env) == want[0]
    else:
        with pytest.raises(DivisionByZero):
            eval_expr(e, env)


def test_grid_helper_shape():
    env, size = env_grid(("x", "y"), -1, 1)
    assert size == 9 and len(env["x"]) == 9
