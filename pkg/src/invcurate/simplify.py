"""LLM-driven simplification of normalized invariants.

Verbose invariants are sent to an LLM together with the program; each
proposed rewrite is parsed, deduplicated, screened for degeneracy and
graded against the verifier. Only grade >= 2 candidates survive. When
nothing survives (or the input was short to begin with) the normalized
invariant itself is graded instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .grade import GradedCandidate, grade_candidate
from .llm import LLMClient, TransportError, extract_json_object
from .normalize import is_degenerate, normalize
from .predicate import PredExpr, PredicateSyntaxError, expr_metrics, parse_predicate, print_minimal
from .verify import DEFAULT_TIMEOUT, OracleBackend, Program, VerificationQuery

log = logging.getLogger(__name__)

DEFAULT_N_CANDIDATES = 4
DEFAULT_VERBOSITY_THRESHOLD = 64

SIMPLIFY_SYSTEM_PROMPT = """\
## Task
Given the C program and the invariant, your task is to simplify the
invariant to a more compact and general form.

## Output format
- Output MUST be a single JSON object.
- The JSON MUST have exactly these keys:
  - "simplified_invariant": A single compact, inductive, C boolean
    expression, nothing else.
  - "rationale": A short explanation of why you simplified the
    invariant to the given form.
## Output format example
{"simplified_invariant":"<simplified_invariant>",
    "rationale":"<rationale>"}

## Guidelines
- The simplified invariant should be logically weaker than (or
  equivalent to) the original, but still inductive and strong enough
  to prove the target property.
- Prefer LINEAR arithmetic expressions (the verifier struggles with
  non-linear math like x*y)
- Prefer mathematical relationships over case enumeration
- Look for patterns across disjuncts (e.g., repeated structure with
  varying constants)
- Generalize enumerated values to ranges (e.g., "i == 1 || i == 2
  || i == 3" -> "1 <= i && i <= 3")
- Remove tautological constraints (e.g., "a == a", "n <= n",
  "0 <= 0", "a + 0 == a", "true", "1")
- Remove constraints on constant variables (variables initialized
  but never modified in loops)
- Replace redundant constraints with simpler equivalents (e.g.,
  "a <= b && b <= a" -> "a == b")
- Ensure the simplified invariant is still inductive (holds before
  loop and preserved by each iteration)
- Use the program context to understand variable semantics and
  loop structure
- Use ONLY plain ASCII characters in your output (no Unicode symbols)"""

SIMPLIFY_USER_TEMPLATE = """\
Simplify the following invariant for the given C program and marker.
c_program:
```c
{program}
```
invariant:
```c
{invariant}
```

marker:
```c
{marker}
```"""


class MalformedResponse(ValueError):
    pass


@dataclass
class SimplifyContext:
    program: Program
    normalized_predicate: PredExpr
    marker: str
    n_candidates: int = DEFAULT_N_CANDIDATES
    verbosity_threshold: int = DEFAULT_VERBOSITY_THRESHOLD

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.verbosity_threshold < 0:
            raise ValueError("verbosity_threshold must be >= 0")


@dataclass
class SimplifyResponse:
    simplified_invariant: str
    rationale: str
    predicate: PredExpr


def build_simplify_prompt(ctx: SimplifyContext) -> tuple[str, str]:
    user = SIMPLIFY_USER_TEMPLATE.format(
        program=ctx.program.source,
        invariant=print_minimal(ctx.normalized_predicate),
        marker=ctx.marker,
    )
    return SIMPLIFY_SYSTEM_PROMPT, user


def parse_simplify_response(text: str) -> SimplifyResponse:
    """Extract and validate the ``{"simplified_invariant", "rationale"}`` object."""
    if not text.isascii():
        raise MalformedResponse("response contains non-ASCII characters")
    obj = extract_json_object(text)
    if obj is None:
        raise MalformedResponse("no JSON object in response")
    if set(obj) != {"simplified_invariant", "rationale"}:
        raise MalformedResponse(f"unexpected keys {sorted(obj)}")
    inv, why = obj["simplified_invariant"], obj["rationale"]
    if not isinstance(inv, str) or not isinstance(why, str):
        raise MalformedResponse("both fields must be strings")
    try:
        pred = parse_predicate(inv)
    except PredicateSyntaxError as exc:
        raise MalformedResponse(f"unparseable invariant: {exc}") from exc
    return SimplifyResponse(inv, why, pred)


@dataclass
class SimplifyStats:
    sampled: int = 0
    malformed: int = 0
    duplicates: int = 0
    degenerate: int = 0
    graded: int = 0
    fallback_grade: int | None = None


def simplify_invariant(
    query: VerificationQuery,
    marker: str,
    phi_norm: PredExpr,
    t_b: float,
    ctx: SimplifyContext,
    llm: LLMClient,
    backend: OracleBackend,
    timeout: float = DEFAULT_TIMEOUT,
    grading_runs: int = 1,
    stats: SimplifyStats | None = None,
) -> list[GradedCandidate]:
    """Qualifying simplifications of ``phi_norm`` with their grades (all >= 2)."""
    stats = stats if stats is not None else SimplifyStats()
    kept: list[GradedCandidate] = []
    if is_degenerate(phi_norm):
        return kept
    if expr_metrics(phi_norm).char_length > ctx.verbosity_threshold:
        system, user = build_simplify_prompt(ctx)
        try:
            raw = llm.complete(system, user, ctx.n_candidates)
        except TransportError as exc:
            log.warning("LLM unavailable, no candidates sampled: %s", exc)
            raw = []
        stats.sampled += len(raw)
        seen: set[str] = set()
        for text in raw:
            try:
                resp = parse_simplify_response(text)
            except MalformedResponse as exc:
                stats.malformed += 1
                log.info("dropping malformed candidate: %s", exc)
                continue
            key = print_minimal(resp.predicate)
            if key in seen:
                stats.duplicates += 1
                continue
            seen.add(key)
            if is_degenerate(normalize(resp.predicate)[0]):
                stats.degenerate += 1
                continue
            gc = grade_candidate(query, marker, resp.predicate, t_b, backend, timeout, grading_runs)
            stats.graded += 1
            if gc.grade >= 2:
                gc.rationale = resp.rationale
                kept.append(gc)
    if not kept:
        gc = grade_candidate(query, marker, phi_norm, t_b, backend, timeout, grading_runs)
        stats.fallback_grade = gc.grade
        if gc.grade >= 2:
            kept.append(gc)
        else:
            log.info("normalized invariant graded %d; no sample emitted", gc.grade)
    return kept
