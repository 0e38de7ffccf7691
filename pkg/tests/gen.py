"""Random predicate ASTs for property tests.

``random_pred`` is a seeded generator biased toward shapes the normalizer
rewrites (reflexive comparisons, literal operands, negated constants);
``preds`` is the equivalent hypothesis strategy.
"""

from __future__ import annotations

import random

from hypothesis import strategies as st

from invcurate.predicate import Binary, BoolLit, Cast, IntLit, Ternary, Unary, Var

VARS = ("w", "x", "y", "z")
ARITH = ("+", "-", "*", "/", "%")
REL = ("<", "<=", ">", ">=", "==", "!=")
LOGIC = ("&&", "||")
CASTS = ("int", "unsigned int", "long long", "_Bool")


def _leaf(rng: random.Random):
    r = rng.random()
    if r < 0.45:
        return Var(rng.choice(VARS))
    if r < 0.8:
        return IntLit(rng.choice((0, 1, 1, 2, 3, 5, 10)))
    if r < 0.9:
        return BoolLit(rng.random() < 0.5)
    return Unary("-", IntLit(rng.randint(0, 4)))


def random_pred(rng: random.Random, depth: int = 6):
    """A random expression of depth at most ``depth``."""
    if depth <= 1 or rng.random() < 0.15:
        return _leaf(rng)
    r = rng.random()
    sub = lambda: random_pred(rng, depth - 1)  # noqa: E731
    if r < 0.08:
        e = sub()
        return Binary(rng.choice(REL), e, e)  # reflexive comparison
    if r < 0.28:
        return Binary(rng.choice(LOGIC), sub(), sub())
    if r < 0.5:
        return Binary(rng.choice(REL), sub(), sub())
    if r < 0.7:
        return Binary(rng.choice(ARITH), sub(), sub())
    if r < 0.8:
        return Unary(rng.choice(("-", "!")), sub())
    if r < 0.88:
        return Cast(rng.choice(CASTS), sub())
    return Ternary(sub(), sub(), sub())


leaves = st.one_of(
    st.sampled_from(VARS).map(Var),
    st.integers(0, 20).map(IntLit),
    st.booleans().map(BoolLit),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from(ARITH + REL + LOGIC), children, children).map(lambda t: Binary(*t)),
        st.tuples(st.sampled_from(REL), children).map(lambda t: Binary(t[0], t[1], t[1])),
        st.tuples(st.sampled_from(("-", "!")), children).map(lambda t: Unary(*t)),
        st.tuples(st.sampled_from(CASTS), children).map(lambda t: Cast(*t)),
        st.tuples(children, children, children).map(lambda t: Ternary(*t)),
    )


preds = st.recursive(leaves, _extend, max_leaves=24)
