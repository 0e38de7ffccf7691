"""Quality grade of a candidate invariant.

0  invalid syntax, or the correctness check is not TRUE
1  correct but the sufficiency check is not TRUE
2  correct and sufficient, split time t_v >= baseline t_b
3  correct and sufficient, t_v < t_b
"""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass

from .predicate import PredExpr, PredicateSyntaxError, parse_predicate
from .verify import (
    DEFAULT_TIMEOUT,
    OracleBackend,
    Outcome,
    Property,
    SplitResult,
    VerificationQuery,
    run_split,
)

log = logging.getLogger(__name__)


@dataclass
class GradedCandidate:
    predicate: PredExpr | None
    grade: int
    split: SplitResult | None
    t_b: float
    rationale: str = ""
    t_v: float | None = None


def quality_grade(valid: bool, v1: Outcome, v2: Outcome, t_v: float, t_b: float) -> int:
    if not valid or v1 is not Outcome.TRUE:
        return 0
    if v2 is not Outcome.TRUE:
        return 1
    return 2 if t_v >= t_b else 3


def grade_candidate(
    query: VerificationQuery,
    marker: str,
    predicate: PredExpr | str,
    t_b: float,
    backend: OracleBackend,
    timeout: float = DEFAULT_TIMEOUT,
    runs: int = 1,
) -> GradedCandidate:
    """Grade ``predicate`` as an invariant at ``marker``.

    A string predicate is parsed first; a syntax error or side-effecting
    operator yields grade 0 without any verifier call. With ``runs > 1``
    the split is repeated and the median t_v is compared against ``t_b``
    (verdicts are taken from the first run).
    """
    if t_b <= 0:
        raise ValueError("t_b must be positive")
    if isinstance(predicate, str):
        try:
            predicate = parse_predicate(predicate)
        except PredicateSyntaxError as exc:
            log.info("candidate rejected at syntax stage: %s", exc)
            return GradedCandidate(None, 0, None, t_b)
    candidate = Property(marker, predicate)
    split = run_split(backend, query, candidate, timeout)
    t_v = split.t_v
    if runs > 1:
        times = [t_v] + [run_split(backend, query, candidate, timeout).t_v for _ in range(runs - 1)]
        t_v = statistics.median(times)
    g = quality_grade(True, split.v1.outcome, split.v2.outcome, t_v, t_b)
    return GradedCandidate(predicate, g, split, t_b, t_v=t_v)
