import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invcurate.cli import main
from invcurate.evaluate import (
    GENERATION_SYSTEM_PROMPT,
    EvalInstance,
    EvalRecord,
    Invalid,
    ReplayGenerator,
    baseline_median,
    build_generation_prompt,
    compute_metrics,
    evaluate_instance,
    parse_generation_response,
    partition_easy_hard,
    read_eval_instances,
    summarize,
)
from invcurate.llm import TransportError
from invcurate.predicate import parse_predicate
from invcurate.verify import Outcome, Program, Verdict

import corpus

REPLAY = corpus.FIXTURES / "replay"
M1 = corpus.MARKER
T, F, U = Outcome.TRUE, Outcome.FALSE, Outcome.UNKNOWN


def fenced(content, marker=M1):
    return "```json\n" + json.dumps({"marker": marker, "content": content}) + "\n```"


class Canned:
    """Model stub: fixed output and latency, counts calls."""

    def __init__(self, text, t_m=0.5):
        self.text, self.t_m, self.calls = text, t_m, 0

    def generate(self, instance):
        self.calls += 1
        return self.text, self.t_m


class Scripted:
    """Backend stub: V2 is the query that still asserts the target ``x > y``."""

    def __init__(self, v1, v2, t1=1.0, t2=1.0):
        self.plan = {"v1": Verdict(v1, t1), "v2": Verdict(v2, t2)}
        self.calls = 0

    def check(self, source, timeout):
        self.calls += 1
        return self.plan["v2" if "assert(x > y)" in source else "v1"]


class TestPrompt:
    def test_key_contract(self, running_example):
        system, user = build_generation_prompt(EvalInstance("a", running_example, M1, 1.0))
        assert '{"marker":"<target_marker>","content":"<content>"}' in system
        assert system == GENERATION_SYSTEM_PROMPT
        assert user.endswith(M1)
        assert running_example.source in user

    def test_inner_marker(self, cohendiv):
        _, user = build_generation_prompt(EvalInstance("c", cohendiv, "INVARIANT_MARKER_2", 1.0))
        assert user.endswith("INVARIANT_MARKER_2")
        fence = user.split("```c\n", 1)[1].split("```", 1)[0]
        inner = fence.index("while (1) {", fence.index("a = 1;"))
        assert fence.index("INVARIANT_MARKER_2();") > inner


class TestParseResponse:
    def test_inner_loop_prediction(self):
        got = parse_generation_response('{"marker":"INVARIANT_MARKER_1","content":"a*y == b"}', M1)
        assert got == parse_predicate("a*y == b")

    def test_fenced(self):
        assert parse_generation_response(fenced("x > 0"), M1) == parse_predicate("x > 0")

    @pytest.mark.parametrize("text", [
        fenced("x > 0", "INVARIANT_MARKER_2"),
        fenced("q += a"),
        fenced("x >"),
        '{"marker":"INVARIANT_MARKER_1","content":"x > 0","extra":1}',
        '{"marker":"INVARIANT_MARKER_1","content":3}',
        "no json here",
        "",
    ])
    def test_invalid(self, text):
        assert isinstance(parse_generation_response(text, M1), Invalid)


class TestEvaluateInstance:
    def test_fast_correct(self, running_example):
        inst = EvalInstance("a", running_example, M1, 10.0)
        rec = evaluate_instance(inst, Scripted(T, T, 1.0, 2.0), Canned(fenced(corpus.RUNNING_V2)))
        assert (rec.valid, rec.correct, rec.speedup, rec.outcome) == (True, True, True, "TRUE")
        assert (rec.t_v, rec.S, rec.vbs) == (2.0, 5.0, 2.0)
        assert rec.invariant == corpus.RUNNING_V2

    def test_sufficiency_failure_is_conclusive(self, running_example):
        inst = EvalInstance("a", running_example, M1, 10.0)
        rec = evaluate_instance(inst, Scripted(T, F), Canned(fenced("x >= 0")))
        assert rec.outcome == "FALSE" and rec.speedup and rec.vbs == 1.0

    def test_unknown_falls_back(self, running_example):
        inst = EvalInstance("a", running_example, M1, 10.0)
        rec = evaluate_instance(inst, Scripted(T, U), Canned(fenced("x >= 0")))
        assert rec.correct and not rec.speedup and (rec.S, rec.vbs) == (1.0, 10.0)

    def test_transport_failure(self, running_example):
        class Down:
            def generate(self, instance):
                raise TransportError("connection refused")

        backend = Scripted(T, T)
        rec = evaluate_instance(EvalInstance("a", running_example, M1, 3.0), backend, Down())
        assert not rec.valid and rec.outcome == "UNKNOWN" and "connection refused" in rec.diagnostic
        assert backend.calls == 0 and rec.vbs == 3.0

    def test_chat_client_adapter(self, running_example, builtin):
        class Chat:
            def complete(self, system, user, n=1):
                return [fenced("x < 0")]

        rec = evaluate_instance(EvalInstance("a", running_example, M1, 3.0), builtin, Chat())
        assert rec.valid and not rec.correct and rec.v1 == "FALSE"

    def test_t_b_must_be_positive(self, running_example):
        with pytest.raises(ValueError):
            EvalInstance("a", running_example, M1, 0.0)


def rec(id="a", t_b=10.0, valid=False, correct=False, outcome="UNKNOWN", t_v=None, t_m=0.0, timed_out=False):
    r = EvalRecord(id, "", None, t_m, valid, correct, False, outcome, t_b, t_v=t_v, vbs=t_b,
                   baseline_timed_out=timed_out)
    if correct and r.conclusive:
        r.speedup, r.S, r.vbs = t_v < t_b, t_b / t_v, min(t_v, t_b)
    return r


class TestMetrics:
    def test_all_invalid(self):
        m = compute_metrics([rec("a", 4.0), rec("b", 8.0)])
        assert m.R_valid == 0.0 and m.VBP == m.mean_t_b == 6.0 and m.S_mean_speedup is None

    def test_two_instance_fixture(self):
        m = compute_metrics([rec("a", 10.0, True, True, "TRUE", 2.0), rec("b", 10.0, True)])
        assert m.VBP == pytest.approx(6.0, abs=1e-9)
        assert m.R_speedup == 50.0 and m.S_mean_speedup == 5.0

    def test_verifier_only(self):
        tbs = [16.0, 40.5, 600.0, 22.25]
        m = compute_metrics([rec(str(i), t) for i, t in enumerate(tbs)])
        assert m.VBP == m.VBP_E2E == sum(tbs) / 4

    def test_latency_only_on_model_arm(self):
        m = compute_metrics([rec("a", 10.0, True, True, "TRUE", 2.0, t_m=9.0)])
        assert (m.VBP, m.VBP_E2E) == (2.0, 10.0)
        assert compute_metrics([rec()], include_latency=False).VBP_E2E is None

    def test_solved_timeouts(self):
        rs = [rec("a", 600.0, True, True, "FALSE", 5.0, timed_out=True),
              rec("b", 600.0, True, True, "UNKNOWN", 5.0, timed_out=True),
              rec("c", 9.0, True, True, "TRUE", 5.0)]
        assert compute_metrics(rs).solved_timeouts == 1

    def test_empty(self):
        assert compute_metrics([]).n == 0


class TestPartition:
    def test_threshold(self):
        assert partition_easy_hard({"e": 14.9, "h": 15.1, "edge": 15.0}) == (["e", "edge"], ["h"])

    def test_empty(self):
        assert partition_easy_hard({}) == ([], [])

    def test_ten_with_three_hard(self):
        times = {f"i{k}": t for k, t in enumerate([1, 2, 3, 15, 4, 16, 5, 600, 6, 20.5])}
        easy, hard = partition_easy_hard(times)
        assert len(hard) == 3 and len(easy) == 7


def test_baseline_median(range_loop, trace_backend):
    assert baseline_median(EvalInstance("r", range_loop, M1, 1.0), trace_backend) == (10.0, False)
    assert baseline_median(EvalInstance("r", range_loop, M1, 1.0), trace_backend, timeout=3) == (3, True)


verdicts = st.sampled_from([T, F, U])
times = st.floats(0.001, 1000.0)


RUNNING = Program.from_source(corpus.source("running_example.c"))


@st.composite
def records(draw, running_example=RUNNING):
    v1, v2 = draw(verdicts), draw(verdicts)
    inst = EvalInstance(str(draw(st.integers(0, 10**6))), running_example, M1, draw(times))
    text = draw(st.sampled_from([fenced("x >= 0"), fenced("x++"), "garbage"]))
    return evaluate_instance(inst, Scripted(v1, v2, draw(times), draw(times)), Canned(text, draw(times)))


class TestRecordInvariants:
    @settings(max_examples=300, deadline=None)
    @given(st.data())
    def test_portfolio_and_indicator_chain(self, data):
        r = data.draw(records())
        assert r.vbs <= r.t_b
        assert (not r.speedup or r.correct) and (not r.correct or r.valid)
        if not (r.correct and r.conclusive):
            assert r.S == 1.0
        if r.S > 1 and r.conclusive:
            assert r.speedup

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_permutation_invariance(self, data):
        rs = [data.draw(records()) for _ in range(data.draw(st.integers(1, 8)))]
        shuffled = data.draw(st.permutations(rs))
        a, b = compute_metrics(rs), compute_metrics(shuffled)
        assert a == b
        assert a.VBP <= a.mean_t_b + 1e-9 and a.VBP <= a.VBP_E2E + 1e-9


def test_random_vbs_bound():
    rng = random.Random(11)
    outcomes = ("TRUE", "FALSE", "UNKNOWN")
    for k in range(10_000):
        r = rec(str(k), rng.uniform(0.01, 600), True, rng.random() < 0.6, rng.choice(outcomes),
                rng.uniform(0.01, 900))
        assert r.vbs <= r.t_b


class TestReplay:
    def test_instances_and_generator(self):
        instances, skipped = read_eval_instances(REPLAY / "instances.jsonl")
        assert len(instances) == 10 and skipped == []
        assert [i.id for i in instances if i.baseline_timed_out] == ["r09"]
        gen = ReplayGenerator.load(REPLAY / "outputs.jsonl")
        assert gen.generate(instances[0])[1] == 1.0

    def test_bad_instance_lines(self, tmp_path, running_example):
        p = tmp_path / "i.jsonl"
        ok = {"id": "ok", "program": running_example.source, "marker": M1, "t_b": 2}
        p.write_text("\n".join(json.dumps(d) for d in [
            ok, {**ok, "id": "m", "marker": "INVARIANT_MARKER_4"}, {**ok, "id": "z", "t_b": 0},
            {"id": "nt", "program": running_example.source, "marker": M1}]) + "\n")
        instances, skipped = read_eval_instances(p)
        assert [i.id for i in instances] == ["ok"]
        assert [s["id"] for s in skipped] == ["m", "z", "nt"]

    def test_summary_shape(self):
        rs = [rec("a", 4.0), rec("b", 40.0, True, True, "TRUE", 4.0)]
        s = summarize(rs).to_dict()
        assert (s["easy"]["n"], s["hard"]["n"], s["hard_threshold"]) == (1, 1, 15.0)

    def test_cli_matches_hand_computed_metrics(self, tmp_path, capsys):
        want = (REPLAY / "expected_metrics.json").read_bytes()
        outs = []
        for run in ("one", "two"):
            out = tmp_path / run
            rc = main(["evaluate", str(REPLAY / "instances.jsonl"), "--from-file", str(REPLAY / "outputs.jsonl"),
                       "--config", str(REPLAY / "config.json"), "--out", str(out)])
            assert rc == 0
            outs.append({p.name: p.read_bytes() for p in out.iterdir()})
        assert outs[0]["metrics.json"] == want
        assert outs[0] == outs[1]
        assert "overall" in capsys.readouterr().out
