import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from invcurate.grade import grade_candidate, quality_grade
from invcurate.verify import Outcome, Program, Verdict, VerificationQuery

import corpus

T, F, U = Outcome.TRUE, Outcome.FALSE, Outcome.UNKNOWN
M1 = corpus.MARKER


def closed_form(valid, v1, v2, t_v, t_b):
    if not valid or v1 is not T:
        return 0
    if v2 is not T:
        return 1
    return 3 if t_v < t_b else 2


@pytest.mark.parametrize("valid,v1,v2", list(itertools.product((True, False), (T, F, U), (T, F, U))))
@pytest.mark.parametrize("t_v,t_b", [(1.0, 2.0), (2.0, 2.0), (3.0, 2.0)])
def test_all_combinations(valid, v1, v2, t_v, t_b):
    assert quality_grade(valid, v1, v2, t_v, t_b) == closed_form(valid, v1, v2, t_v, t_b)


def test_tie_is_grade_two():
    assert quality_grade(True, T, T, 5.0, 5.0) == 2


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 100))
def test_monotone_in_t_v(t1, t2, t_b):
    lo, hi = sorted((t1, t2))
    assert quality_grade(True, T, T, lo, t_b) >= quality_grade(True, T, T, hi, t_b)


class CountingBackend:
    def __init__(self):
        self.calls = 0

    def check(self, source, timeout):
        self.calls += 1
        return Verdict(T, 0.01)


class TestGradeCandidate:
    def test_running_example_grade_three(self, running_example, builtin):
        q = VerificationQuery.from_program(running_example)
        g = grade_candidate(q, M1, corpus.RUNNING_V2, t_b=60.0, backend=builtin)
        assert g.grade == 3 and g.t_v == g.split.t_v

    def test_counter_candidate(self, running_example, builtin):
        q = VerificationQuery.from_program(running_example)
        g = grade_candidate(q, M1, "x < 0", t_b=60.0, backend=builtin)
        assert g.grade == 0 and g.split.v1.outcome is F

    def test_insufficient_candidate(self, running_example, builtin):
        # the concrete checker only refutes sufficiency when the target really fails
        buggy = Program.from_source(running_example.source.replace("assert(x > y)", "assert(x < y)"))
        g = grade_candidate(VerificationQuery.from_program(buggy), M1, "x >= 0", t_b=60.0, backend=builtin)
        assert g.grade == 1 and g.split.v2.outcome is F

    def test_side_effect_never_reaches_backend(self, running_example):
        backend = CountingBackend()
        g = grade_candidate(VerificationQuery.from_program(running_example), M1, "x += 1", 1.0, backend)
        assert g.grade == 0 and g.split is None and backend.calls == 0

    def test_median_of_runs(self, running_example):
        backend = CountingBackend()
        g = grade_candidate(VerificationQuery.from_program(running_example), M1, "x >= 0", 1.0,
                            backend, runs=3)
        assert backend.calls == 6 and g.grade == 3

    def test_t_b_positive(self, running_example, builtin):
        with pytest.raises(ValueError):
            grade_candidate(VerificationQuery.from_program(running_example), M1, "x >= 0", 0, builtin)
