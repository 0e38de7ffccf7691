"""C boolean expressions used as invariant predicates.

Lexing, precedence-climbing parsing, minimal-parenthesis printing,
arbitrary-precision evaluation and size metrics. The grammar is the
side-effect-free arithmetic/relational/logical fragment of C plus casts
and the conditional operator.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Union


class PredicateSyntaxError(ValueError):
    """Malformed or unsupported predicate text."""

    def __init__(self, message: str, position: int = -1):
        self.message = message
        self.position = position
        where = f" at offset {position}" if position >= 0 else ""
        super().__init__(f"{message}{where}")


class SideEffectError(PredicateSyntaxError):
    """An assignment, increment or decrement operator appeared in a predicate."""


class UnboundVariable(LookupError):
    pass


class DivisionByZero(ZeroDivisionError):
    pass


# --------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class IntLit:
    value: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("IntLit holds non-negative values; use Unary('-', ...)")


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Cast:
    type_name: str
    operand: "PredExpr"


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "PredExpr"


@dataclass(frozen=True)
class Binary:
    op: str
    lhs: "PredExpr"
    rhs: "PredExpr"


@dataclass(frozen=True)
class Ternary:
    cond: "PredExpr"
    then: "PredExpr"
    orelse: "PredExpr"


PredExpr = Union[IntLit, BoolLit, Var, Cast, Unary, Binary, Ternary]

ARITH_OPS = ("+", "-", "*", "/", "%")
REL_OPS = ("<", "<=", ">", ">=", "==", "!=")
LOGIC_OPS = ("&&", "||")
BINARY_OPS = ARITH_OPS + REL_OPS + LOGIC_OPS
UNARY_OPS = ("-", "!")

BINARY_PREC = {
    "||": 4,
    "&&": 5,
    "==": 9, "!=": 9,
    "<": 10, "<=": 10, ">": 10, ">=": 10,
    "+": 12, "-": 12,
    "*": 13, "/": 13, "%": 13,
}
TERNARY_PREC = 3
UNARY_PREC = 14
ATOM_PREC = 16


# --------------------------------------------------------------------------
# Lexer

@dataclass(frozen=True)
class Token:
    kind: str  # "num", "ident", "str", "op", "eof"
    text: str
    pos: int
    value: int = 0


SIDE_EFFECT_OPS = frozenset(
    ["++", "--", "=", "+=", "-=", "*=", "/=", "%=", "<<=", ">>=", "&=", "|=", "^="]
)

# longest first
_PUNCTUATORS = sorted(
    [
        "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
        "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
        "+", "-", "*", "/", "%", "<", ">", "=", "!", "?", ":", "(", ")",
        "[", "]", "{", "}", ";", ",", ".", "&", "|", "^", "~",
    ],
    key=len,
    reverse=True,
)
_PUNCT_RE = re.compile("|".join(re.escape(p) for p in _PUNCTUATORS))
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUM_RE = re.compile(r"(0[xX][0-9a-fA-F]+|[0-9]+)([uUlL]*)")
_SPACE_RE = re.compile(r"\s+|//[^\n]*|/\*.*?\*/", re.S)
_STRING_RE = re.compile(r"\"(\\.|[^\"\\\n])*\"|'(\\.|[^'\\\n])*'")


def _int_value(digits: str) -> int:
    if digits[:2] in ("0x", "0X"):
        return int(digits, 16)
    if len(digits) > 1 and digits[0] == "0":
        return int(digits, 8)
    return int(digits)


def tokenize(text: str) -> list[Token]:
    """Split C source text into tokens; the final token has kind ``eof``."""
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        m = _SPACE_RE.match(text, i)
        if m:
            i = m.end()
            continue
        c = text[i]
        if c.isdigit():
            m = _NUM_RE.match(text, i)
            end = m.end()
            if end < n and (text[end].isalnum() or text[end] == "_"):
                raise PredicateSyntaxError(f"malformed number {text[i:end + 1]!r}", i)
            try:
                value = _int_value(m.group(1))
            except ValueError:
                raise PredicateSyntaxError(f"malformed number {m.group(0)!r}", i) from None
            tokens.append(Token("num", m.group(0), i, value))
            i = end
            continue
        m = _STRING_RE.match(text, i)
        if m:
            tokens.append(Token("str", m.group(0), i))
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            tokens.append(Token("ident", m.group(0), i))
            i = m.end()
            continue
        m = _PUNCT_RE.match(text, i)
        if m:
            tokens.append(Token("op", m.group(0), i))
            i = m.end()
            continue
        raise PredicateSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(Token("eof", "", n))
    return tokens


def check_no_side_effects(text: str) -> bool:
    """True iff ``text`` lexes and contains no assignment/increment/decrement."""
    try:
        tokens = tokenize(text)
    except PredicateSyntaxError:
        return False
    return not any(t.kind == "op" and t.text in SIDE_EFFECT_OPS for t in tokens)


# --------------------------------------------------------------------------
# Parser

_TYPE_WORDS = frozenset(
    ["char", "short", "int", "long", "signed", "unsigned", "_Bool", "bool",
     "__int128", "float", "double", "void", "size_t"]
)
_TYPE_WORD_RE = re.compile(r"__u?int\d+(_t)?|u?int\d+_t")


def is_type_word(word: str) -> bool:
    return word in _TYPE_WORDS or bool(_TYPE_WORD_RE.fullmatch(word))


class ExprParser:
    """Recursive-descent parser over a token list.

    Stops at the first token that cannot continue an expression, so the
    statement parser of the built-in checker can reuse it.
    """

    def __init__(self, tokens: list[Token], pos: int = 0):
        self.tokens = tokens
        self.pos = pos

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.kind == "op" and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        return self.advance()

    def error(self, message: str) -> PredicateSyntaxError:
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        return PredicateSyntaxError(f"{message}, found {found}", t.pos)

    def parse_expr(self) -> PredExpr:
        cond = self.parse_binary(BINARY_PREC["||"])
        if self.at("?"):
            self.advance()
            then = self.parse_expr()
            self.expect(":")
            orelse = self.parse_expr()
            return Ternary(cond, then, orelse)
        return cond

    def parse_binary(self, min_prec: int) -> PredExpr:
        lhs = self.parse_unary()
        while True:
            t = self.tok
            if t.kind != "op" or t.text not in BINARY_PREC:
                return lhs
            prec = BINARY_PREC[t.text]
            if prec < min_prec:
                return lhs
            self.advance()
            rhs = self.parse_binary(prec + 1)
            lhs = Binary(t.text, lhs, rhs)

    def _cast_type(self) -> str | None:
        # "(" type-word+ ")" ; returns the joined type name without consuming
        j = self.pos + 1
        words = []
        while self.tokens[j].kind == "ident" and is_type_word(self.tokens[j].text):
            words.append(self.tokens[j].text)
            j += 1
        if words and self.tokens[j].kind == "op" and self.tokens[j].text == ")":
            return " ".join(words)
        return None

    def parse_unary(self) -> PredExpr:
        t = self.tok
        if t.kind == "op":
            if t.text in ("-", "!"):
                self.advance()
                return Unary(t.text, self.parse_unary())
            if t.text == "+":
                self.advance()
                return self.parse_unary()
            if t.text == "(":
                type_name = self._cast_type()
                if type_name is not None:
                    self.pos += 2 + len(type_name.split())
                    return Cast(type_name, self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> PredExpr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return IntLit(t.value)
        if t.kind == "ident":
            if t.text in ("true", "false"):
                self.advance()
                return BoolLit(t.text == "true")
            if is_type_word(t.text):
                raise self.error("unexpected type name")
            self.advance()
            if self.at("("):
                raise PredicateSyntaxError(f"function call {t.text!r} not supported", t.pos)
            return Var(t.text)
        if self.at("("):
            self.advance()
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "op" and t.text in SIDE_EFFECT_OPS:
            raise SideEffectError(f"side-effecting operator {t.text!r}", t.pos)
        raise self.error("expected an expression")


def parse_predicate(text: str) -> PredExpr:
    """Parse a C boolean expression.

    Raises SideEffectError if any assignment/increment token is present and
    PredicateSyntaxError for anything else outside the supported grammar.
    """
    if not text or not text.strip():
        raise PredicateSyntaxError("empty predicate", 0)
    tokens = tokenize(text)
    for t in tokens:
        if t.kind == "op" and t.text in SIDE_EFFECT_OPS:
            raise SideEffectError(f"side-effecting operator {t.text!r}", t.pos)
    parser = ExprParser(tokens)
    expr = parser.parse_expr()
    if parser.tok.kind != "eof":
        raise parser.error("unexpected trailing input")
    return expr


# --------------------------------------------------------------------------
# Printer

_TIGHT_OPS = frozenset("*/%")


def precedence(e: PredExpr) -> int:
    if isinstance(e, Binary):
        return BINARY_PREC[e.op]
    if isinstance(e, Ternary):
        return TERNARY_PREC
    if isinstance(e, (Unary, Cast)):
        return UNARY_PREC
    return ATOM_PREC


def _wrap(text: str, needed: bool) -> str:
    return f"({text})" if needed else text


def _render(e: PredExpr, c_literals: bool) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        if c_literals:
            return "1" if e.value else "0"
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        inner = _render(e.operand, c_literals)
        # "--x" would lex as a decrement
        needed = precedence(e.operand) < UNARY_PREC or (e.op == "-" and inner.startswith("-"))
        return e.op + _wrap(inner, needed)
    if isinstance(e, Cast):
        inner = _render(e.operand, c_literals)
        return f"({e.type_name})" + _wrap(inner, precedence(e.operand) < UNARY_PREC)
    if isinstance(e, Binary):
        p = BINARY_PREC[e.op]
        lhs = _wrap(_render(e.lhs, c_literals), precedence(e.lhs) < p)
        rhs = _wrap(_render(e.rhs, c_literals), precedence(e.rhs) <= p)
        if e.op in _TIGHT_OPS:
            return f"{lhs}{e.op}{rhs}"
        return f"{lhs} {e.op} {rhs}"
    if isinstance(e, Ternary):
        cond = _wrap(_render(e.cond, c_literals), precedence(e.cond) <= TERNARY_PREC)
        return f"{cond} ? {_render(e.then, c_literals)} : {_render(e.orelse, c_literals)}"
    raise TypeError(f"not a predicate node: {e!r}")


def print_minimal(expr: PredExpr, *, c_literals: bool = False) -> str:
    """Render ``expr`` with parentheses only where the parse requires them.

    Binary operators get single surrounding spaces except ``*``, ``/`` and
    ``%``. With ``c_literals`` boolean literals print as ``1``/``0`` so the
    text compiles without <stdbool.h>.
    """
    return _render(expr, c_literals)


# --------------------------------------------------------------------------
# Evaluation

def _truncdiv(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def eval_expr(expr: PredExpr, env: Mapping[str, int]) -> int:
    """Evaluate with C-like semantics over unbounded integers.

    Relational and logical operators yield 0/1, ``&&``/``||`` short-circuit,
    ``/`` truncates toward zero and ``%`` takes the sign of the dividend.
    Casts are the identity.
    """
    if isinstance(expr, IntLit):
        return expr.value
    if isinstance(expr, BoolLit):
        return int(expr.value)
    if isinstance(expr, Var):
        try:
            return env[expr.name]
        except KeyError:
            raise UnboundVariable(expr.name) from None
    if isinstance(expr, Cast):
        return eval_expr(expr.operand, env)
    if isinstance(expr, Unary):
        v = eval_expr(expr.operand, env)
        return -v if expr.op == "-" else int(v == 0)
    if isinstance(expr, Ternary):
        if eval_expr(expr.cond, env):
            return eval_expr(expr.then, env)
        return eval_expr(expr.orelse, env)
    op = expr.op
    if op == "&&":
        return int(bool(eval_expr(expr.lhs, env)) and bool(eval_expr(expr.rhs, env)))
    if op == "||":
        return int(bool(eval_expr(expr.lhs, env)) or bool(eval_expr(expr.rhs, env)))
    a = eval_expr(expr.lhs, env)
    b = eval_expr(expr.rhs, env)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op in ("/", "%"):
        if b == 0:
            raise DivisionByZero(f"{print_minimal(expr)} divides by zero")
        q = _truncdiv(a, b)
        return q if op == "/" else a - b * q
    if op == "<":
        return int(a < b)
    if op == "<=":
        return int(a <= b)
    if op == ">":
        return int(a > b)
    if op == ">=":
        return int(a >= b)
    if op == "==":
        return int(a == b)
    if op == "!=":
        return int(a != b)
    raise ValueError(f"unknown operator {op!r}")


# --------------------------------------------------------------------------
# Metrics and traversal helpers

@dataclass(frozen=True)
class ExprMetrics:
    char_length: int
    num_conjuncts: int
    num_disjuncts: int

    def to_dict(self) -> dict:
        return {
            "char_length": self.char_length,
            "num_conjuncts": self.num_conjuncts,
            "num_disjuncts": self.num_disjuncts,
        }


def flatten(expr: PredExpr, op: str) -> list[PredExpr]:
    """Operands of the maximal ``op`` spine rooted at ``expr``."""
    out: list[PredExpr] = []
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Binary) and e.op == op:
            stack.append(e.rhs)
            stack.append(e.lhs)
        else:
            out.append(e)
    return out


def expr_metrics(expr: PredExpr) -> ExprMetrics:
    disjuncts = flatten(expr, "||")
    conjuncts = sum(len(flatten(d, "&&")) for d in disjuncts)
    return ExprMetrics(len(print_minimal(expr).strip()), conjuncts, len(disjuncts))


def iter_nodes(expr: PredExpr) -> Iterator[PredExpr]:
    stack = [expr]
    while stack:
        e = stack.pop()
        yield e
        if isinstance(e, (Unary, Cast)):
            stack.append(e.operand)
        elif isinstance(e, Binary):
            stack.extend((e.rhs, e.lhs))
        elif isinstance(e, Ternary):
            stack.extend((e.orelse, e.then, e.cond))


def free_vars(expr: PredExpr) -> set[str]:
    return {e.name for e in iter_nodes(expr) if isinstance(e, Var)}
