import json

import pytest

from invcurate.llm import StaticClient, TransportError
from invcurate.normalize import normalize
from invcurate.predicate import BoolLit, parse_predicate, print_minimal
from invcurate.simplify import (
    SIMPLIFY_SYSTEM_PROMPT,
    MalformedResponse,
    SimplifyContext,
    SimplifyStats,
    build_simplify_prompt,
    parse_simplify_response,
    simplify_invariant,
)
from invcurate.verify import Program, VerificationQuery

import corpus

M1 = corpus.MARKER


def reply(inv, why="ok"):
    return json.dumps({"simplified_invariant": inv, "rationale": why})


@pytest.fixture
def range_case(range_loop):
    norm, _ = normalize(parse_predicate(corpus.RANGE_V0), drop_casts=True)
    return range_loop, norm


class TestPrompt:
    def test_invariant_in_fence(self, range_case):
        prog, norm = range_case
        system, user = build_simplify_prompt(SimplifyContext(prog, norm, M1))
        assert f"invariant:\n```c\n{print_minimal(norm)}\n```" in user
        assert user.rstrip().endswith(f"```c\n{M1}\n```")
        assert "Prefer LINEAR arithmetic expressions" in system

    def test_empty_program(self):
        prog = Program("", (), (0, 0), "1")
        _, user = build_simplify_prompt(SimplifyContext(prog, parse_predicate("x > 0"), M1))
        assert "```c\n\n```" in user

    def test_context_validation(self, range_case):
        prog, norm = range_case
        with pytest.raises(ValueError):
            SimplifyContext(prog, norm, M1, n_candidates=0)
        with pytest.raises(ValueError):
            SimplifyContext(prog, norm, M1, verbosity_threshold=-1)


class TestParseResponse:
    def test_fenced(self):
        r = parse_simplify_response("Sure:\n```json\n" + reply("i <= N", "range") + "\n```")
        assert r.simplified_invariant == "i <= N" and r.rationale == "range"
        assert r.predicate == parse_predicate("i <= N")

    @pytest.mark.parametrize("text", [
        "no json here",
        json.dumps({"simplified_invariant": "x > 0"}),
        json.dumps({"simplified_invariant": "x > 0", "rationale": "r", "extra": 1}),
        reply("x +"),
        reply("x += 1"),
        reply("x ≤ y"),
        json.dumps({"simplified_invariant": 3, "rationale": "r"}),
    ])
    def test_malformed(self, text):
        with pytest.raises(MalformedResponse):
            parse_simplify_response(text)


class TestAlgorithm:
    def test_candidate_kept(self, range_case, builtin):
        prog, norm = range_case
        q = VerificationQuery.from_program(prog)
        llm = StaticClient([reply(corpus.RANGE_V2)] * 4)
        stats = SimplifyStats()
        out = simplify_invariant(q, M1, norm, 60.0, SimplifyContext(prog, norm, M1), llm, builtin,
                                 stats=stats)
        assert [print_minimal(g.predicate) for g in out] == [corpus.RANGE_V2]
        assert out[0].grade == 3
        assert stats.sampled == 4 and stats.duplicates == 3
        assert llm.calls[0][2] == 4

    def test_degenerate_input(self, range_case, builtin):
        prog, _ = range_case
        llm = StaticClient([reply("i >= 1")])
        q = VerificationQuery.from_program(prog)
        assert simplify_invariant(q, M1, BoolLit(True), 60.0, SimplifyContext(prog, BoolLit(True), M1),
                                  llm, builtin) == []
        assert llm.calls == []

    def test_short_invariant_skips_llm(self, range_case, trace_backend):
        prog, _ = range_case
        short = parse_predicate("1 <= i && i <= N")
        llm = StaticClient([reply("i >= 1")])
        q = VerificationQuery.from_program(prog)
        # equal trace counts give t_v == t_b, the grade-2 boundary
        out = simplify_invariant(q, M1, short, 10.0, SimplifyContext(prog, short, M1), llm, trace_backend)
        assert [(g.predicate, g.grade) for g in out] == [(short, 2)]
        assert llm.calls == []

    def test_bad_candidates_fall_back(self, range_case, builtin):
        prog, norm = range_case
        q = VerificationQuery.from_program(prog)
        llm = StaticClient([reply("i < 0"), reply("1 <= 1"), "garbage", reply("i<0")])
        stats = SimplifyStats()
        out = simplify_invariant(q, M1, norm, 60.0, SimplifyContext(prog, norm, M1), llm, builtin,
                                 stats=stats)
        assert [g.predicate for g in out] == [norm]
        assert stats.malformed == 1 and stats.degenerate == 1 and stats.duplicates == 1
        assert stats.graded == 1 and stats.fallback_grade == 3

    def test_transport_failure_falls_back(self, range_case, builtin):
        prog, norm = range_case

        class Down:
            def complete(self, system, user, n=1):
                raise TransportError("offline")

        q = VerificationQuery.from_program(prog)
        out = simplify_invariant(q, M1, norm, 60.0, SimplifyContext(prog, norm, M1), Down(), builtin)
        assert [g.predicate for g in out] == [norm]

    def test_insufficient_fallback_emits_nothing(self, running_example, builtin):
        buggy = Program.from_source(running_example.source.replace("assert(x > y)", "assert(x < y)"))
        q = VerificationQuery.from_program(buggy)
        weak = parse_predicate("x >= 0")
        ctx = SimplifyContext(buggy, weak, M1)
        assert simplify_invariant(q, M1, weak, 60.0, ctx, StaticClient([]), builtin) == []

    def test_results_are_distinct_and_non_degenerate(self, range_case, builtin):
        prog, norm = range_case
        q = VerificationQuery.from_program(prog)
        llm = StaticClient([reply(corpus.RANGE_V2), reply("1<=i&&i<=N&&N<=10"), reply("i >= 1"), reply("true")])
        out = simplify_invariant(q, M1, norm, 60.0, SimplifyContext(prog, norm, M1), llm, builtin)
        texts = [print_minimal(g.predicate) for g in out]
        assert texts == [corpus.RANGE_V2, "i >= 1"]
        assert all(g.grade >= 2 for g in out)
