"""Verification queries, program annotation and the split decision procedure.

A query ``<A, P, q>`` is turned into C source by replacing loop markers
with ``assume``/``assert`` statements. A candidate invariant ``I`` splits
the query into a correctness check ``V(A, P, I)`` and a sufficiency check
``V(A + {I}, P, q)`` which run concurrently against an oracle backend.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import shlex
import signal
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .minic import builtin_check
from .predicate import PredExpr, parse_predicate, print_minimal

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 600.0
TARGET = "TARGET"  # location of the program's own assert(<target_property>)

_MARKER_CALL_RE = re.compile(r"\b(INVARIANT_MARKER_\d+)\s*\(\s*\)\s*;")
_ASSERT_CALL_RE = re.compile(r"\bassert\s*\(")
_ASSERT_DEF_RE = re.compile(r"\b(?:void|int)\s+assert\s*\(")
_ASSUME_DEF_RE = re.compile(r"\b(?:void|int)\s+assume\s*\(")


class UnknownMarker(KeyError):
    pass


class Outcome(str, enum.Enum):
    TRUE = "TRUE"
    FALSE = "FALSE"
    UNKNOWN = "UNKNOWN"

    def __str__(self) -> str:
        return self.value


# --------------------------------------------------------------------------
# Programs and properties

def _balanced_end(text: str, open_idx: int) -> int:
    """Index of the ``)`` matching the ``(`` at ``open_idx``."""
    depth = 0
    for i in range(open_idx, len(text)):
        if text[i] == "(":
            depth += 1
        elif text[i] == ")":
            depth -= 1
            if depth == 0:
                return i
    raise ValueError("unbalanced parentheses in assert")


@dataclass(frozen=True)
class Program:
    """C source instrumented with ``INVARIANT_MARKER_k();`` calls.

    ``target_span`` is the character span of the ``assert(...);`` statement
    holding the target property; ``target_text`` is its condition.
    """

    source: str
    markers: tuple[tuple[str, int], ...]
    target_span: tuple[int, int]
    target_text: str

    @classmethod
    def from_source(cls, source: str) -> "Program":
        markers = []
        seen = set()
        for m in _MARKER_CALL_RE.finditer(source):
            name = m.group(1)
            if name in seen:
                raise ValueError(f"marker {name} occurs more than once")
            seen.add(name)
            markers.append((name, source.count("\n", 0, m.start())))
        calls = []
        for m in _ASSERT_CALL_RE.finditer(source):
            # skip the helper's own definition "void assert(int cond)"
            if source[max(0, m.start() - 16):m.start()].rstrip().endswith(("void", "int")):
                continue
            calls.append(m)
        if len(calls) != 1:
            raise ValueError(f"expected exactly one target assert(...) call, found {len(calls)}")
        m = calls[0]
        open_idx = m.end() - 1
        close = _balanced_end(source, open_idx)
        end = close + 1
        rest = source[end:]
        semi = len(rest) - len(rest.lstrip())
        if rest[semi:semi + 1] == ";":
            end += semi + 1
        return cls(source, tuple(markers), (m.start(), end), source[open_idx + 1:close].strip())

    @property
    def marker_names(self) -> list[str]:
        return [name for name, _ in self.markers]

    def postcondition(self) -> "Property":
        return Property(TARGET, parse_predicate(self.target_text))


@dataclass(frozen=True)
class Property:
    marker: str
    predicate: PredExpr


@dataclass(frozen=True)
class VerificationQuery:
    program: Program
    postcondition: Property
    preconditions: frozenset[Property] = frozenset()

    @classmethod
    def from_program(cls, program: Program, preconditions=()) -> "VerificationQuery":
        return cls(program, program.postcondition(), frozenset(preconditions))


@dataclass
class Verdict:
    outcome: Outcome
    wall_time: float
    diagnostic: str = ""
    timed_out: bool = False
    counterexample: list[int] | None = None

    def to_dict(self) -> dict:
        return {"outcome": self.outcome.value, "wall_time": self.wall_time, "diagnostic": self.diagnostic}


@dataclass
class SplitResult:
    v1: Verdict
    v2: Verdict

    @property
    def t_v(self) -> float:
        return max(self.v1.wall_time, self.v2.wall_time)


# --------------------------------------------------------------------------
# Annotation

PRELUDE_PARTS = {
    "abort": "extern void abort(void);",
    "reach_error": "extern void reach_error(void);",
    "assert": "void assert(int cond) { if (!(cond)) { ERROR: { reach_error(); abort(); } } }",
    "assume": "void assume(int cond) { if (!cond) { abort(); } }",
}


def _prelude(source: str) -> str:
    parts = []
    # declarations, not calls: the helper bodies call abort and reach_error
    if not re.search(r"\bvoid\s+abort\s*\(", source):
        parts.append(PRELUDE_PARTS["abort"])
    if not re.search(r"\bvoid\s+reach_error\s*\(", source):
        parts.append(PRELUDE_PARTS["reach_error"])
    if not _ASSERT_DEF_RE.search(source):
        parts.append(PRELUDE_PARTS["assert"])
    if not _ASSUME_DEF_RE.search(source):
        parts.append(PRELUDE_PARTS["assume"])
    # one line, so every original line number shifts by exactly one
    return " ".join(parts) + "\n" if parts else ""


def annotate(program: Program, assumes, assertion: Property) -> str:
    """C source for the query ``<assumes, program, assertion>``.

    Each marker call is replaced in place by the ``assume`` statements of
    the properties located there, followed by the ``assert`` if the
    assertion is located there; unused markers are removed. The target
    ``assert`` is kept (with the assertion's predicate) only when the
    assertion is the postcondition.
    """
    known = set(program.marker_names) | {TARGET}
    for p in list(assumes) + [assertion]:
        if p.marker not in known:
            raise UnknownMarker(p.marker)

    def stmts(location: str) -> str:
        out = [f"assume({print_minimal(p.predicate, c_literals=True)});"
               for p in sorted(assumes, key=lambda p: print_minimal(p.predicate))
               if p.marker == location]
        if assertion.marker == location:
            out.append(f"assert({print_minimal(assertion.predicate, c_literals=True)});")
        return " ".join(out)

    edits = [(m.start(), m.end(), stmts(m.group(1))) for m in _MARKER_CALL_RE.finditer(program.source)]
    start, end = program.target_span
    edits.append((start, end, stmts(TARGET)))
    edits.sort()
    src = program.source
    pieces, last = [], 0
    for s, e, text in edits:
        pieces.append(src[last:s])
        pieces.append(text)
        last = e
    pieces.append(src[last:])
    body = "".join(pieces)
    return _prelude(body) + body


# --------------------------------------------------------------------------
# Backends

class OracleBackend(Protocol):
    """Answers one annotated-source query. Must be thread-safe."""

    def check(self, source: str, timeout: float) -> Verdict: ...


@dataclass
class BuiltinBackend:
    """In-process exhaustive checker for the mini-C subset.

    ``clock="wall"`` reports compute time. ``clock="trace"`` reports
    ``traces_explored * trace_seconds`` instead, which makes timings (and
    everything derived from them) reproducible across runs.
    """

    max_states: int = 100_000
    max_steps: int = 100_000
    clock: str = "wall"
    trace_seconds: float = 0.001

    def check(self, source: str, timeout: float) -> Verdict:
        t0 = time.perf_counter()
        res = builtin_check(source, self.max_states, self.max_steps, deadline=t0 + timeout)
        elapsed = time.perf_counter() - t0
        if self.clock == "trace":
            elapsed = res.traces * self.trace_seconds
        if res.timed_out or elapsed > timeout:
            return Verdict(Outcome.UNKNOWN, timeout, "timeout", timed_out=True)
        return Verdict(Outcome(res.status), elapsed, res.diagnostic, counterexample=res.counterexample)


@dataclass
class ExternalBackendConfig:
    """How to launch an external verifier on one ``.c`` file.

    ``command`` is a template containing ``{file}``; the default verdict
    patterns match UAutomizer's result lines and SV-COMP style
    ``TRUE``/``FALSE`` output.
    """

    command: str = "Ultimate.py --spec unreach-call.prp --architecture 32bit --file {file}"
    timeout: float = DEFAULT_TIMEOUT
    true_regex: str = r"(?m)^\s*(TRUE\s*$|RESULT: Ultimate proved your program to be correct)"
    false_regex: str = r"(?m)^\s*(FALSE(\(.*\))?\s*$|RESULT: Ultimate proved your program to be incorrect)"
    unknown_regex: str = r"(?m)^\s*(UNKNOWN|RESULT: Ultimate could not prove)"
    memory_limit_wrapper: str | None = None  # e.g. "runlim --space-limit=16384"
    keep_artifacts: str | None = None  # directory for retained .c files
    max_concurrent: int = 8

    @classmethod
    def from_dict(cls, d: dict) -> "ExternalBackendConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown external backend keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExternalBackendConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


class SpawnFailure(OSError):
    pass


def parse_verifier_output(config: ExternalBackendConfig, output: str) -> Outcome | None:
    # FALSE first: an incorrect verdict line may share a prefix with others
    if re.search(config.false_regex, output):
        return Outcome.FALSE
    if re.search(config.true_regex, output):
        return Outcome.TRUE
    if re.search(config.unknown_regex, output):
        return Outcome.UNKNOWN
    return None


_counter_lock = threading.Lock()
_counter = [0]


def external_check(config: ExternalBackendConfig, annotated_source: str, timeout: float) -> Verdict:
    """Run the configured verifier on ``annotated_source`` in a subprocess.

    The process group is killed on timeout. Raises SpawnFailure if the
    command cannot be started.
    """
    with _counter_lock:
        _counter[0] += 1
        serial = _counter[0]
    if config.keep_artifacts:
        Path(config.keep_artifacts).mkdir(parents=True, exist_ok=True)
        path = Path(config.keep_artifacts) / f"query_{os.getpid()}_{serial:06d}.c"
        path.write_text(annotated_source, encoding="utf-8")
        cleanup = False
    else:
        fd, name = tempfile.mkstemp(suffix=".c", prefix="query_")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(annotated_source)
        path = Path(name)
        cleanup = True
    argv = shlex.split(config.command.format(file=shlex.quote(str(path))))
    if config.memory_limit_wrapper:
        argv = shlex.split(config.memory_limit_wrapper) + argv
    t0 = time.perf_counter()
    try:
        try:
            proc = subprocess.Popen(
                argv, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                text=True, start_new_session=True,
            )
        except OSError as exc:
            raise SpawnFailure(f"cannot start {argv[0]!r}: {exc}") from exc
        try:
            out, _ = proc.communicate(timeout=timeout)
        except subprocess.TimeoutExpired:
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            proc.communicate()
            return Verdict(Outcome.UNKNOWN, timeout, "timeout", timed_out=True)
        elapsed = time.perf_counter() - t0
    finally:
        if cleanup:
            path.unlink(missing_ok=True)
    outcome = parse_verifier_output(config, out)
    if outcome is None:
        tail = out.strip().splitlines()[-3:]
        return Verdict(Outcome.UNKNOWN, elapsed,
                       f"unparseable verifier output (exit {proc.returncode}): {' | '.join(tail)}")
    return Verdict(outcome, elapsed)


class ExternalBackend:
    def __init__(self, config: ExternalBackendConfig):
        self.config = config
        self._slots = threading.BoundedSemaphore(config.max_concurrent)

    def check(self, source: str, timeout: float) -> Verdict:
        with self._slots:
            return external_check(self.config, source, timeout)


# --------------------------------------------------------------------------
# Queries

def run_query(backend: OracleBackend, annotated_source: str, timeout: float = DEFAULT_TIMEOUT) -> Verdict:
    """One oracle call. Failures become UNKNOWN verdicts, never exceptions."""
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    t0 = time.perf_counter()
    try:
        v = backend.check(annotated_source, timeout)
    except Exception as exc:  # backend failure is an UNKNOWN answer
        elapsed = min(time.perf_counter() - t0, timeout)
        log.warning("verifier backend failed: %s", exc)
        return Verdict(Outcome.UNKNOWN, elapsed, f"backend failure: {exc}")
    if v.timed_out:
        v.wall_time = timeout
    return v


def correctness_source(query: VerificationQuery, candidate: Property) -> str:
    return annotate(query.program, query.preconditions, candidate)


def sufficiency_source(query: VerificationQuery, candidate: Property) -> str:
    return annotate(query.program, query.preconditions | {candidate}, query.postcondition)


def baseline_source(query: VerificationQuery) -> str:
    return annotate(query.program, query.preconditions, query.postcondition)


def run_split(backend: OracleBackend, query: VerificationQuery, candidate: Property,
              timeout: float = DEFAULT_TIMEOUT) -> SplitResult:
    """Run correctness and sufficiency checks concurrently."""
    if candidate.marker not in query.program.marker_names:
        raise UnknownMarker(candidate.marker)
    src1 = correctness_source(query, candidate)
    src2 = sufficiency_source(query, candidate)
    with ThreadPoolExecutor(max_workers=2) as pool:
        f1 = pool.submit(run_query, backend, src1, timeout)
        f2 = pool.submit(run_query, backend, src2, timeout)
        return SplitResult(f1.result(), f2.result())


def decide(v1: Verdict | Outcome, v2: Verdict | Outcome) -> Outcome:
    """Combine the two checks: TRUE/TRUE -> TRUE, */FALSE -> FALSE, else UNKNOWN."""
    o1 = v1.outcome if isinstance(v1, Verdict) else Outcome(v1)
    o2 = v2.outcome if isinstance(v2, Verdict) else Outcome(v2)
    if o1 is Outcome.TRUE and o2 is Outcome.TRUE:
        return Outcome.TRUE
    if o2 is Outcome.FALSE:
        return Outcome.FALSE
    return Outcome.UNKNOWN


@dataclass
class BaselineResult:
    t_b: float
    all_timed_out: bool
    times: list[float] = field(default_factory=list)
    outcomes: list[Outcome] = field(default_factory=list)


def lower_median(values: list[float]) -> float:
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def measure_baseline(backend: OracleBackend, query: VerificationQuery, k: int = 3,
                     timeout: float = DEFAULT_TIMEOUT) -> BaselineResult:
    """Median wall time of ``V(A, P, q)`` over ``k`` runs (lower middle for even k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    src = baseline_source(query)
    verdicts = [run_query(backend, src, timeout) for _ in range(k)]
    times = [v.wall_time for v in verdicts]
    all_to = all(v.timed_out for v in verdicts)
    t_b = timeout if all_to else lower_median(times)
    return BaselineResult(t_b, all_to, times, [v.outcome for v in verdicts])
