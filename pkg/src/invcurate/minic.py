"""Exhaustive bounded checker for a small C subset.

Supports integer variables, assignment (including compound forms and
``++``/``--``), ``if``/``while``/``do``/``for``, ``break``/``continue``,
``assume``/``assert``/``reach_error``/``abort`` and ``__VERIFIER_nondet_*()``
whose range is bounded by the ``assume`` statements directly following it.
Every nondet valuation is enumerated and each trace executed concretely,
so a TRUE answer is only given when the enumeration is exhaustive.
Integers are unbounded (no 32-bit wraparound).
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field

from .predicate import (
    Binary,
    Cast,
    ExprParser,
    IntLit,
    PredExpr,
    PredicateSyntaxError,
    Token,
    UnboundVariable,
    Unary,
    Var,
    eval_expr,
    flatten,
    is_type_word,
    tokenize,
)


class UnsupportedConstruct(Exception):
    """Source uses something outside the supported subset."""


class _StepLimit(Exception):
    pass


class _Deadline(Exception):
    pass


class _Halt(Exception):
    """assume failed or abort(): the trace ends without error."""


class _Error(Exception):
    """An assertion failed or reach_error() was called."""

    def __init__(self, where: str):
        self.where = where


# --------------------------------------------------------------------------
# Statement AST

@dataclass
class Nondet:
    func: str
    lo: int | None = None
    hi: int | None = None


@dataclass
class Assign:
    name: str
    op: str  # "=", "+=", "-=", "*=", "/=", "%="
    value: PredExpr | Nondet


@dataclass
class Decl:
    items: list[tuple[str, PredExpr | Nondet | None]]


@dataclass
class Assume:
    cond: PredExpr


@dataclass
class Assert:
    cond: PredExpr
    text: str


@dataclass
class ReachError:
    pass


@dataclass
class Halt:
    pass


@dataclass
class Nop:
    pass


@dataclass
class If:
    cond: PredExpr
    then: object
    orelse: object | None


@dataclass
class While:
    cond: PredExpr | None  # None: for(;;)
    body: object
    step: object | None = None
    test_first: bool = True


@dataclass
class Block:
    stmts: list = field(default_factory=list)


class Break_:
    pass


class Continue_:
    pass


class Return_:
    pass


BREAK, CONTINUE, RETURN = Break_(), Continue_(), Return_()

_NONDET_RE = re.compile(r"__VERIFIER_nondet_(\w+)")
_MARKER_RE = re.compile(r"INVARIANT_MARKER_\d+")
_DECL_QUALIFIERS = frozenset(["const", "static", "volatile", "register"])
_ASSIGN_OPS = frozenset(["=", "+=", "-=", "*=", "/=", "%="])
_TYPE_RANGES = {
    "bool": (0, 1),
    "_Bool": (0, 1),
    "char": (-128, 127),
    "uchar": (0, 255),
    "schar": (-128, 127),
}


def _nondet_default_range(suffix: str) -> tuple[int | None, int | None]:
    if suffix in _TYPE_RANGES:
        return _TYPE_RANGES[suffix]
    if suffix.startswith("u"):
        return 0, None
    return None, None


# --------------------------------------------------------------------------
# Parser

def _strip_preprocessor(source: str) -> str:
    return "\n".join("" if ln.lstrip().startswith("#") else ln for ln in source.splitlines())


class ProgramParser:
    def __init__(self, source: str):
        self.source = source
        try:
            tokens = tokenize(_strip_preprocessor(source))
        except PredicateSyntaxError as exc:
            raise UnsupportedConstruct(str(exc)) from None
        self.tokens: list[Token] = tokens
        self.pos = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        return self.tok.kind == "op" and self.tok.text == text

    def at_word(self, word: str) -> bool:
        return self.tok.kind == "ident" and self.tok.text == word

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, text: str) -> None:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise UnsupportedConstruct(f"expected {text!r} near offset {self.tok.pos}, found {found!r}")
        self.advance()

    def skip_balanced(self, open_: str, close: str) -> None:
        self.expect(open_)
        depth = 1
        while depth:
            t = self.advance()
            if t.kind == "eof":
                raise UnsupportedConstruct(f"unbalanced {open_!r}")
            if t.kind == "op" and t.text == open_:
                depth += 1
            elif t.kind == "op" and t.text == close:
                depth -= 1

    def expr(self) -> PredExpr:
        p = ExprParser(self.tokens, self.pos)
        try:
            e = p.parse_expr()
        except PredicateSyntaxError as exc:
            raise UnsupportedConstruct(str(exc)) from None
        self.pos = p.pos
        return e

    def at_type(self) -> bool:
        t = self.tok
        return t.kind == "ident" and (is_type_word(t.text) or t.text in _DECL_QUALIFIERS)

    def type_words(self) -> list[str]:
        words = []
        while self.at_type():
            words.append(self.advance().text)
        return words

    # top level
    def parse_program(self) -> tuple[list, Block]:
        globals_: list = []
        main: Block | None = None
        while self.tok.kind != "eof":
            if self.at(";"):
                self.advance()
                continue
            if self.at_word("typedef") or self.at_word("struct") or self.at_word("enum"):
                raise UnsupportedConstruct(f"{self.tok.text} declarations are not supported")
            if self.at_word("extern"):
                while not self.at(";"):
                    if self.tok.kind == "eof":
                        raise UnsupportedConstruct("unterminated extern declaration")
                    self.advance()
                self.advance()
                continue
            if not self.at_type():
                raise UnsupportedConstruct(f"unexpected top-level token {self.tok.text!r}")
            self.type_words()
            if self.tok.kind != "ident":
                raise UnsupportedConstruct("expected a declarator")
            if self.peek().text == "(":
                name = self.advance().text
                self.skip_balanced("(", ")")
                if self.at(";"):
                    self.advance()
                elif name == "main":
                    main = self.block()
                else:
                    self.skip_balanced("{", "}")
            else:
                globals_.append(self.declarators())
        if main is None:
            raise UnsupportedConstruct("no main function")
        return globals_, main

    def value(self) -> PredExpr | Nondet:
        t = self.tok
        if t.kind == "ident" and self.peek().text == "(":
            m = _NONDET_RE.fullmatch(t.text)
            if m is None:
                raise UnsupportedConstruct(f"call to {t.text!r} in an expression")
            self.advance()
            self.expect("(")
            self.expect(")")
            lo, hi = _nondet_default_range(m.group(1))
            return Nondet(t.text, lo, hi)
        return self.expr()

    def declarators(self) -> Decl:
        items = []
        while True:
            if self.tok.kind != "ident":
                raise UnsupportedConstruct("expected a variable name")
            name = self.advance().text
            if self.at("["):
                raise UnsupportedConstruct("arrays are not supported")
            init = None
            if self.at("="):
                self.advance()
                init = self.value()
            items.append((name, init))
            if self.at(","):
                self.advance()
                continue
            self.expect(";")
            return Decl(items)

    def block(self) -> Block:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise UnsupportedConstruct("unterminated block")
            stmts.append(self.statement())
        self.advance()
        _bind_nondet_ranges(stmts)
        return Block(stmts)

    def body(self):
        s = self.statement()
        if isinstance(s, Block):
            return s
        b = [s]
        _bind_nondet_ranges(b)
        return Block(b)

    def simple(self):
        """Assignment or call without the trailing ';'."""
        t = self.tok
        if self.at("++") or self.at("--"):
            op = self.advance().text
            name = self.advance()
            if name.kind != "ident":
                raise UnsupportedConstruct("expected a variable after increment")
            return Assign(name.text, "+=" if op == "++" else "-=", IntLit(1))
        if t.kind != "ident":
            raise UnsupportedConstruct(f"unexpected token {t.text!r}")
        nxt = self.peek()
        if nxt.text == "(":
            return self.call()
        if nxt.text in ("++", "--"):
            self.advance()
            op = self.advance().text
            return Assign(t.text, "+=" if op == "++" else "-=", IntLit(1))
        if nxt.kind == "op" and nxt.text in _ASSIGN_OPS:
            self.advance()
            op = self.advance().text
            return Assign(t.text, op, self.value())
        if nxt.text == ":":
            raise UnsupportedConstruct(f"label {t.text!r} is not supported")
        raise UnsupportedConstruct(f"unsupported statement starting with {t.text!r}")

    def call(self):
        start = self.tok.pos
        name = self.advance().text
        self.expect("(")
        if name in ("assume", "__VERIFIER_assume", "assert"):
            cond = self.expr()
            end = self.tok.pos
            self.expect(")")
            if name == "assert":
                return Assert(cond, self.source[start:end + 1])
            return Assume(cond)
        if name in ("reach_error", "__VERIFIER_error"):
            self.expect(")")
            return ReachError()
        if name in ("abort", "exit"):
            if not self.at(")"):
                self.expr()
            self.expect(")")
            return Halt()
        if _MARKER_RE.fullmatch(name):
            self.expect(")")
            return Nop()
        if _NONDET_RE.fullmatch(name):
            self.expect(")")
            return Nop()
        raise UnsupportedConstruct(f"call to unsupported function {name!r}")

    def statement(self):
        t = self.tok
        if self.at("{"):
            return self.block()
        if self.at(";"):
            self.advance()
            return Nop()
        if t.kind == "ident":
            w = t.text
            if w == "if":
                self.advance()
                self.expect("(")
                cond = self.expr()
                self.expect(")")
                then = self.body()
                orelse = None
                if self.at_word("else"):
                    self.advance()
                    orelse = self.body()
                return If(cond, then, orelse)
            if w == "while":
                self.advance()
                self.expect("(")
                cond = self.expr()
                self.expect(")")
                return While(cond, self.body())
            if w == "do":
                self.advance()
                body = self.body()
                if not self.at_word("while"):
                    raise UnsupportedConstruct("expected 'while' after do-body")
                self.advance()
                self.expect("(")
                cond = self.expr()
                self.expect(")")
                self.expect(";")
                return While(cond, body, test_first=False)
            if w == "for":
                return self.for_loop()
            if w == "break":
                self.advance()
                self.expect(";")
                return BREAK
            if w == "continue":
                self.advance()
                self.expect(";")
                return CONTINUE
            if w == "return":
                self.advance()
                if not self.at(";"):
                    self.expr()
                self.expect(";")
                return RETURN
            if w in ("goto", "switch", "case", "default"):
                raise UnsupportedConstruct(f"{w!r} is not supported")
            if self.at_type():
                self.type_words()
                return self.declarators()
        s = self.simple()
        self.expect(";")
        return s

    def for_loop(self):
        self.advance()
        self.expect("(")
        init = None
        if self.at_type():
            self.type_words()
            init = self.declarators()
        elif self.at(";"):
            self.advance()
        else:
            init = self.simple()
            self.expect(";")
        cond = None if self.at(";") else self.expr()
        self.expect(";")
        step = None if self.at(")") else self.simple()
        self.expect(")")
        loop = While(cond, self.body(), step=step)
        return Block([init, loop]) if init is not None else loop


def _const(e: PredExpr) -> int | None:
    while isinstance(e, Cast):
        e = e.operand
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, Unary) and e.op == "-":
        v = _const(e.operand)
        return None if v is None else -v
    return None


def _is_var(e: PredExpr, name: str) -> bool:
    while isinstance(e, Cast):
        e = e.operand
    return isinstance(e, Var) and e.name == name


def _bounds(cond: PredExpr, name: str) -> tuple[int | None, int | None]:
    lo = hi = None
    flip = {"<=": ">=", ">=": "<=", "<": ">", ">": "<", "==": "=="}
    for c in flatten(cond, "&&"):
        if not isinstance(c, Binary) or c.op not in flip:
            continue
        if _is_var(c.lhs, name) and _const(c.rhs) is not None:
            op, k = c.op, _const(c.rhs)
        elif _is_var(c.rhs, name) and _const(c.lhs) is not None:
            op, k = flip[c.op], _const(c.lhs)
        else:
            continue
        if op in (">=", ">", "=="):
            b = k + 1 if op == ">" else k
            lo = b if lo is None else max(lo, b)
        if op in ("<=", "<", "=="):
            b = k - 1 if op == "<" else k
            hi = b if hi is None else min(hi, b)
    return lo, hi


def _bind_nondet_ranges(stmts: list) -> None:
    for i, s in enumerate(stmts):
        if isinstance(s, Assign) and isinstance(s.value, Nondet):
            targets = [(s.name, s.value)]
        elif isinstance(s, Decl):
            targets = [(n, v) for n, v in s.items if isinstance(v, Nondet)]
        else:
            continue
        for name, nd in targets:
            j = i + 1
            while j < len(stmts) and isinstance(stmts[j], Assume):
                lo, hi = _bounds(stmts[j].cond, name)
                if lo is not None:
                    nd.lo = lo if nd.lo is None else max(nd.lo, lo)
                if hi is not None:
                    nd.hi = hi if nd.hi is None else min(nd.hi, hi)
                j += 1


def parse_program(source: str) -> tuple[list, Block]:
    return ProgramParser(source).parse_program()


# --------------------------------------------------------------------------
# Execution

@dataclass
class CheckResult:
    status: str  # "TRUE" | "FALSE" | "UNKNOWN"
    traces: int
    steps: int
    diagnostic: str = ""
    counterexample: list[int] | None = None
    timed_out: bool = False


class _Trace:
    def __init__(self, prefix: list[int], max_steps: int, deadline: float | None):
        self.prefix = prefix
        self.choices: list[int] = []
        self.ranges: list[tuple[int, int]] = []
        self.env: dict[str, int] = {}
        self.declared: set[str] = set()
        self.steps = 0
        self.max_steps = max_steps
        self.deadline = deadline

    def tick(self) -> None:
        self.steps += 1
        if self.steps > self.max_steps:
            raise _StepLimit()
        if self.deadline is not None and not self.steps & 1023 and time.perf_counter() > self.deadline:
            raise _Deadline()

    def eval(self, e: PredExpr) -> int:
        try:
            return eval_expr(e, self.env)
        except UnboundVariable as exc:
            raise UnsupportedConstruct(f"read of uninitialized or undeclared variable {exc.args[0]!r}") from None

    def value(self, v: PredExpr | Nondet) -> int:
        if not isinstance(v, Nondet):
            return self.eval(v)
        if v.lo is None or v.hi is None:
            raise UnsupportedConstruct(f"unbounded range for {v.func}()")
        k = len(self.choices)
        x = self.prefix[k] if k < len(self.prefix) else v.lo
        self.choices.append(x)
        self.ranges.append((v.lo, v.hi))
        if v.lo > v.hi:
            # the following assumes are unsatisfiable
            raise _Halt()
        return x

    def assign(self, name: str, op: str, v: PredExpr | Nondet) -> None:
        if name not in self.declared:
            raise UnsupportedConstruct(f"assignment to undeclared variable {name!r}")
        x = self.value(v)
        if op == "=":
            self.env[name] = x
            return
        cur = self.env.get(name)
        if cur is None:
            raise UnsupportedConstruct(f"read of uninitialized variable {name!r}")
        self.env[name] = eval_expr(Binary(op[0], Var("a"), Var("b")), {"a": cur, "b": x})

    def run(self, s):
        """Execute a statement; returns BREAK/CONTINUE/RETURN or None."""
        self.tick()
        if isinstance(s, Block):
            for t in s.stmts:
                sig = self.run(t)
                if sig is not None:
                    return sig
            return None
        if isinstance(s, Assign):
            self.assign(s.name, s.op, s.value)
            return None
        if isinstance(s, Decl):
            for name, init in s.items:
                self.declared.add(name)
                self.env.pop(name, None)
                if init is not None:
                    self.env[name] = self.value(init)
            return None
        if isinstance(s, Assume):
            if not self.eval(s.cond):
                raise _Halt()
            return None
        if isinstance(s, Assert):
            if not self.eval(s.cond):
                raise _Error(s.text)
            return None
        if isinstance(s, If):
            if self.eval(s.cond):
                return self.run(s.then)
            if s.orelse is not None:
                return self.run(s.orelse)
            return None
        if isinstance(s, While):
            first = True
            while True:
                if s.cond is not None and (s.test_first or not first) and not self.eval(s.cond):
                    return None
                first = False
                sig = self.run(s.body)
                if sig is BREAK:
                    return None
                if sig is RETURN:
                    return RETURN
                if s.step is not None:
                    self.run(s.step)
                self.tick()
        if isinstance(s, Nop):
            return None
        if s is BREAK or s is CONTINUE or s is RETURN:
            return s
        if isinstance(s, ReachError):
            raise _Error("reach_error()")
        if isinstance(s, Halt):
            raise _Halt()
        raise UnsupportedConstruct(f"cannot execute {type(s).__name__}")


def _next_prefix(choices: list[int], ranges: list[tuple[int, int]]) -> list[int] | None:
    for i in range(len(choices) - 1, -1, -1):
        if choices[i] < ranges[i][1]:
            return choices[:i] + [choices[i] + 1]
    return None


def builtin_check(
    source: str,
    max_states: int = 100_000,
    max_steps: int = 100_000,
    deadline: float | None = None,
) -> CheckResult:
    """Enumerate every nondet valuation of ``source`` and execute it.

    ``max_states`` caps the number of traces, ``max_steps`` the statements
    executed per trace. ``deadline`` is a ``time.perf_counter()`` value.
    """
    try:
        globals_, main = parse_program(source)
    except UnsupportedConstruct as exc:
        return CheckResult("UNKNOWN", 0, 0, f"unsupported: {exc}")
    prefix: list[int] = []
    traces = steps = 0
    while prefix is not None:
        if traces >= max_states:
            return CheckResult("UNKNOWN", traces, steps, f"state bound {max_states} exceeded")
        tr = _Trace(prefix, max_steps, deadline)
        traces += 1
        try:
            for g in globals_:
                tr.run(g)
            tr.run(main)
        except _Halt:
            pass
        except _Error as err:
            return CheckResult("FALSE", traces, steps + tr.steps,
                               f"error reached: {err.where}", counterexample=list(tr.choices))
        except _StepLimit:
            return CheckResult("UNKNOWN", traces, steps + tr.steps, f"step bound {max_steps} exceeded")
        except _Deadline:
            return CheckResult("UNKNOWN", traces, steps + tr.steps, "timeout", timed_out=True)
        except UnsupportedConstruct as exc:
            return CheckResult("UNKNOWN", traces, steps + tr.steps, f"unsupported: {exc}")
        except ZeroDivisionError as exc:
            return CheckResult("UNKNOWN", traces, steps + tr.steps, f"undefined behaviour: {exc}")
        steps += tr.steps
        prefix = _next_prefix(tr.choices, tr.ranges)
    return CheckResult("TRUE", traces, steps)
