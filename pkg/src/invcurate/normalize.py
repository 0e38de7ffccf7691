"""Semantics-preserving cleanup of raw verifier invariants.

One bottom-up pass of local rewrite rules (tautology elimination and
contradiction propagation), plus an optional cast-stripping pre-pass.
Parenthesis minimization is a property of the printer and needs no rule.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .predicate import (
    Binary,
    BoolLit,
    Cast,
    ExprMetrics,
    IntLit,
    PredExpr,
    Ternary,
    Unary,
    expr_metrics,
)

RULES = (
    "TautConj", "TautDisj", "TautRefl", "TautConst",
    "ContraConj", "ContraDisj", "ContraRefl", "NotConst",
)

_REFL_TRUE = frozenset(["<=", ">=", "=="])
_REFL_FALSE = frozenset(["<", ">", "!="])
_COMPARE = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}

TRUE = BoolLit(True)
FALSE = BoolLit(False)


@dataclass
class NormalizationReport:
    input_metrics: ExprMetrics
    output_metrics: ExprMetrics
    rules_fired: dict[str, int] = field(default_factory=dict)
    casts_stripped: int = 0

    def to_dict(self) -> dict:
        return {
            "input_metrics": self.input_metrics.to_dict(),
            "output_metrics": self.output_metrics.to_dict(),
            "rules_fired": dict(sorted(self.rules_fired.items())),
            "casts_stripped": self.casts_stripped,
        }


def truth_constant(e: PredExpr) -> bool | None:
    """Truth value of a literal node, None for anything else."""
    if isinstance(e, BoolLit):
        return e.value
    if isinstance(e, IntLit):
        return e.value != 0
    return None


def int_constant(e: PredExpr) -> int | None:
    if isinstance(e, BoolLit):
        return int(e.value)
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, Unary) and e.op == "-" and isinstance(e.operand, IntLit):
        return -e.operand.value
    return None


def is_boolean(e: PredExpr) -> bool:
    """Whether ``e`` always evaluates to 0 or 1.

    Dropping a neutral operand (``phi && true -> phi``) only preserves the
    value when ``phi`` is itself 0/1-valued, so those rules check this.
    """
    if isinstance(e, BoolLit):
        return True
    if isinstance(e, IntLit):
        return e.value in (0, 1)
    if isinstance(e, Binary):
        return e.op in _COMPARE or e.op in ("&&", "||")
    if isinstance(e, Unary):
        return e.op == "!"
    if isinstance(e, Ternary):
        return is_boolean(e.then) and is_boolean(e.orelse)
    return False


def strip_casts(expr: PredExpr) -> PredExpr:
    """Replace every Cast node by its operand."""
    return _strip(expr, [0])


def _strip(e: PredExpr, count: list[int]) -> PredExpr:
    if isinstance(e, Cast):
        count[0] += 1
        return _strip(e.operand, count)
    if isinstance(e, Unary):
        return Unary(e.op, _strip(e.operand, count))
    if isinstance(e, Binary):
        return Binary(e.op, _strip(e.lhs, count), _strip(e.rhs, count))
    if isinstance(e, Ternary):
        return Ternary(_strip(e.cond, count), _strip(e.then, count), _strip(e.orelse, count))
    return e


class _Rewriter:
    def __init__(self):
        self.fired: Counter[str] = Counter()

    def visit(self, e: PredExpr) -> PredExpr:
        if isinstance(e, Unary):
            return self.rewrite_unary(Unary(e.op, self.visit(e.operand)))
        if isinstance(e, Cast):
            return Cast(e.type_name, self.visit(e.operand))
        if isinstance(e, Binary):
            return self.rewrite_binary(Binary(e.op, self.visit(e.lhs), self.visit(e.rhs)))
        if isinstance(e, Ternary):
            return Ternary(self.visit(e.cond), self.visit(e.then), self.visit(e.orelse))
        return e

    def rewrite_unary(self, e: Unary) -> PredExpr:
        if e.op == "!":
            t = truth_constant(e.operand)
            if t is not None:
                self.fired["NotConst"] += 1
                # keep the literal kind so "!0" does not grow into "true"
                if isinstance(e.operand, IntLit):
                    return IntLit(0 if t else 1)
                return FALSE if t else TRUE
        return e

    def rewrite_binary(self, e: Binary) -> PredExpr:
        op, lhs, rhs = e.op, e.lhs, e.rhs
        if op == "&&":
            lt, rt = truth_constant(lhs), truth_constant(rhs)
            if lt is True and is_boolean(rhs):
                self.fired["TautConj"] += 1
                return rhs
            if rt is True and is_boolean(lhs):
                self.fired["TautConj"] += 1
                return lhs
            if lt is False or rt is False:
                self.fired["ContraConj"] += 1
                return FALSE
            return e
        if op == "||":
            lt, rt = truth_constant(lhs), truth_constant(rhs)
            if lt is True or rt is True:
                self.fired["TautDisj"] += 1
                return TRUE
            if lt is False and is_boolean(rhs):
                self.fired["ContraDisj"] += 1
                return rhs
            if rt is False and is_boolean(lhs):
                self.fired["ContraDisj"] += 1
                return lhs
            return e
        if op in _COMPARE:
            if lhs == rhs:
                if op in _REFL_TRUE:
                    self.fired["TautRefl"] += 1
                    return TRUE
                self.fired["ContraRefl"] += 1
                return FALSE
            a, b = int_constant(lhs), int_constant(rhs)
            if a is not None and b is not None:
                self.fired["TautConst"] += 1
                return TRUE if _COMPARE[op](a, b) else FALSE
        return e


def normalize(expr: PredExpr, *, drop_casts: bool = False) -> tuple[PredExpr, NormalizationReport]:
    """Apply the rewrite rules in a single bottom-up traversal.

    With ``drop_casts`` the casts are stripped first and counted in the
    report. Returns the rewritten expression and a report of what fired.
    """
    before = expr_metrics(expr)
    stripped = [0]
    if drop_casts:
        expr = _strip(expr, stripped)
    rw = _Rewriter()
    out = rw.visit(expr)
    report = NormalizationReport(
        input_metrics=before,
        output_metrics=expr_metrics(out),
        rules_fired={k: v for k, v in rw.fired.items() if v},
        casts_stripped=stripped[0],
    )
    return out, report


def is_degenerate(expr: PredExpr) -> bool:
    """True for a constant predicate (a bare boolean or integer literal)."""
    return truth_constant(expr) is not None
