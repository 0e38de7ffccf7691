"""Evaluation harness: ask a model for an invariant, validate it, run the
split check and aggregate the metric suite (rates, mean speedup, VBS/VBP)."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .llm import LLMClient, TransportError, extract_json_object
from .predicate import PredExpr, PredicateSyntaxError, parse_predicate, print_minimal
from .verify import (
    DEFAULT_TIMEOUT,
    OracleBackend,
    Outcome,
    Program,
    Property,
    VerificationQuery,
    decide,
    measure_baseline,
    run_split,
)

log = logging.getLogger(__name__)

DEFAULT_HARD_THRESHOLD = 15.0

GENERATION_SYSTEM_PROMPT = """\
You are an expert C programmer and highly proficient
in generating strong loop invariants
for C programs that accelerate traditional verifiers' verification process.

## Input format
- A C program instrumented with loop markers of the form:
  ```c
  INVARIANT_MARKER_k();  // appears at the *start of each loop body*
  ```
  - The program contains a single target property as an assertion of the form:
  ```c
  assert(<target_property>);
  ```
- A target loop marker (e.g., "INVARIANT_MARKER_1")

## Task
- Propose ONE loop invariant that is intended to hold specifically at the target loop marker.
- The invariant should help prove the target property and be inductive if possible.

## Output format
- Output MUST be a single JSON object on one line wrapped in ```json``` tags and nothing else.
- The JSON MUST have exactly these keys:
  - "marker": MUST be exactly the target loop marker (e.g., "INVARIANT_MARKER_1")
  - "content": ONLY a valid C boolean expression for the invariant.

## Output format example
```json
{"marker":"<target_marker>","content":"<content>"}
```"""

GENERATION_USER_TEMPLATE = """\
## User Input
### C Program
```c
{program}
```
### Target Loop Marker
{target_marker}"""


@dataclass(frozen=True)
class Invalid:
    reason: str


@dataclass
class EvalInstance:
    id: str
    program: Program
    marker: str
    t_b: float
    baseline_timed_out: bool = False
    preconditions: tuple[Property, ...] = ()

    def __post_init__(self):
        if not self.t_b > 0:
            raise ValueError(f"{self.id}: t_b must be positive")

    @property
    def query(self) -> VerificationQuery:
        return VerificationQuery.from_program(self.program, self.preconditions)


@dataclass
class EvalRecord:
    id: str
    raw_model_output: str
    invariant: str | None
    t_m: float
    valid: bool
    correct: bool
    speedup: bool
    outcome: str
    t_b: float
    t1: float | None = None
    t2: float | None = None
    t_v: float | None = None
    S: float = 1.0
    vbs: float = 0.0
    v1: str | None = None
    v2: str | None = None
    baseline_timed_out: bool = False
    diagnostic: str = ""

    @property
    def conclusive(self) -> bool:
        return self.outcome in (Outcome.TRUE.value, Outcome.FALSE.value)

    def to_dict(self) -> dict:
        return asdict(self)


def build_generation_prompt(instance: EvalInstance) -> tuple[str, str]:
    user = GENERATION_USER_TEMPLATE.format(program=instance.program.source,
                                           target_marker=instance.marker)
    return GENERATION_SYSTEM_PROMPT, user


def parse_generation_response(text: str, expected_marker: str) -> PredExpr | Invalid:
    obj = extract_json_object(text or "")
    if obj is None:
        return Invalid("no JSON object in model output")
    if set(obj) != {"marker", "content"}:
        return Invalid(f"expected keys marker/content, got {sorted(obj)}")
    if obj["marker"] != expected_marker:
        return Invalid(f"marker {obj['marker']!r} != {expected_marker!r}")
    if not isinstance(obj["content"], str):
        return Invalid("content is not a string")
    try:
        return parse_predicate(obj["content"])
    except PredicateSyntaxError as exc:
        return Invalid(f"content rejected: {exc}")


# --------------------------------------------------------------------------
# Model adapters: each yields (raw_text, t_m) for an instance

class ModelGenerator:
    """Queries a chat client with the generation prompt, timing the call."""

    def __init__(self, client: LLMClient):
        self.client = client

    def generate(self, instance: EvalInstance) -> tuple[str, float]:
        system, user = build_generation_prompt(instance)
        t0 = time.perf_counter()
        out = self.client.complete(system, user, 1)
        t_m = time.perf_counter() - t0
        if not out:
            raise TransportError("model returned no completion")
        return out[0], t_m


class ReplayGenerator:
    """Serves pre-generated outputs from ``{id, output, t_m}`` JSONL records."""

    def __init__(self, entries: dict[str, tuple[str, float]]):
        self.entries = entries

    @classmethod
    def load(cls, path) -> "ReplayGenerator":
        entries = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    entries[str(d["id"])] = (d.get("output") or "", float(d.get("t_m", 0.0)))
        return cls(entries)

    def generate(self, instance: EvalInstance) -> tuple[str, float]:
        if instance.id not in self.entries:
            raise TransportError(f"no replayed output for {instance.id}")
        return self.entries[instance.id]


def _as_generator(model):
    return model if hasattr(model, "generate") else ModelGenerator(model)


def evaluate_instance(instance: EvalInstance, backend: OracleBackend, model,
                      timeout: float = DEFAULT_TIMEOUT) -> EvalRecord:
    """Generate, validate, split-check and score one instance."""
    t_b = instance.t_b
    rec = EvalRecord(instance.id, "", None, 0.0, False, False, False, Outcome.UNKNOWN.value,
                     t_b, vbs=t_b, baseline_timed_out=instance.baseline_timed_out)
    try:
        rec.raw_model_output, rec.t_m = _as_generator(model).generate(instance)
    except TransportError as exc:
        rec.diagnostic = f"model failure: {exc}"
        log.warning("[%s] %s", instance.id, rec.diagnostic)
        return rec
    parsed = parse_generation_response(rec.raw_model_output, instance.marker)
    if isinstance(parsed, Invalid):
        rec.diagnostic = parsed.reason
        log.info("[%s] invalid output: %s", instance.id, parsed.reason)
        return rec
    rec.valid = True
    rec.invariant = print_minimal(parsed)
    split = run_split(backend, instance.query, Property(instance.marker, parsed), timeout)
    rec.v1, rec.v2 = split.v1.outcome.value, split.v2.outcome.value
    rec.t1, rec.t2, rec.t_v = split.v1.wall_time, split.v2.wall_time, split.t_v
    rec.outcome = decide(split.v1, split.v2).value
    rec.correct = split.v1.outcome is Outcome.TRUE
    rec.diagnostic = "; ".join(d for d in (split.v1.diagnostic, split.v2.diagnostic) if d)
    if rec.correct and rec.conclusive:
        rec.speedup = rec.t_v < t_b
        rec.S = t_b / max(rec.t_v, 1e-9)
        rec.vbs = min(rec.t_v, t_b)
    log.info("[%s] %s v1=%s v2=%s t_v=%.3f t_b=%.3f", instance.id, rec.outcome,
             rec.v1, rec.v2, rec.t_v, t_b)
    return rec


# --------------------------------------------------------------------------
# Metrics

@dataclass
class MetricsReport:
    n: int
    R_valid: float
    R_correct: float
    R_speedup: float
    S_mean_speedup: float | None
    VBP: float
    VBP_E2E: float | None
    solved_timeouts: int
    mean_t_b: float

    def to_dict(self) -> dict:
        return asdict(self)


def _vbs_e2e(r: EvalRecord) -> float:
    if r.correct and r.conclusive:
        return min(r.t_v + r.t_m, r.t_b)
    return r.t_b


def compute_metrics(records, include_latency: bool = True) -> MetricsReport:
    """Aggregate rates (percent), mean speedup over accelerated instances and VBP."""
    records = list(records)
    n = len(records)
    if n == 0:
        return MetricsReport(0, 0.0, 0.0, 0.0, None, 0.0, 0.0 if include_latency else None, 0, 0.0)

    def rate(flag):
        return 100.0 * sum(1 for r in records if getattr(r, flag)) / n

    sped = [r.S for r in records if r.speedup]
    return MetricsReport(
        n=n,
        R_valid=rate("valid"),
        R_correct=rate("correct"),
        R_speedup=rate("speedup"),
        S_mean_speedup=math.fsum(sped) / len(sped) if sped else None,
        VBP=math.fsum(r.vbs for r in records) / n,
        VBP_E2E=math.fsum(_vbs_e2e(r) for r in records) / n if include_latency else None,
        solved_timeouts=sum(1 for r in records if r.baseline_timed_out and r.conclusive),
        mean_t_b=math.fsum(r.t_b for r in records) / n,
    )


def partition_easy_hard(baseline_times: dict, threshold: float = DEFAULT_HARD_THRESHOLD):
    """Split instance ids by median baseline time; hard means strictly above ``threshold``."""
    easy = sorted(i for i, t in baseline_times.items() if t <= threshold)
    hard = sorted(i for i, t in baseline_times.items() if t > threshold)
    return easy, hard


def baseline_median(instance_or_query, backend: OracleBackend, k: int = 3,
                    timeout: float = DEFAULT_TIMEOUT) -> tuple[float, bool]:
    """Median baseline seconds over ``k`` runs, plus the all-runs-timed-out flag."""
    query = getattr(instance_or_query, "query", instance_or_query)
    res = measure_baseline(backend, query, k, timeout)
    if res.all_timed_out:
        log.info("baseline timed out on all %d runs", k)
    return res.t_b, res.all_timed_out


# --------------------------------------------------------------------------
# Batch driver

def read_eval_instances(path, backend: OracleBackend | None = None, k: int = 3,
                        timeout: float = DEFAULT_TIMEOUT) -> tuple[list[EvalInstance], list[dict]]:
    """Load evaluation JSONL; instances lacking ``t_b`` get a measured baseline."""
    instances, skipped = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            d = None
            try:
                d = json.loads(line)
                program = Program.from_source(d["program"])
                if d["marker"] not in program.marker_names:
                    raise ValueError(f"marker {d['marker']} not in program")
                pre = tuple(Property(p["marker"], parse_predicate(p["predicate"]))
                            for p in d.get("preconditions") or ())
                t_b, timed_out = d.get("t_b"), bool(d.get("baseline_timed_out", False))
                if t_b is None:
                    if backend is None:
                        raise ValueError("t_b missing and no backend to measure it")
                    q = VerificationQuery.from_program(program, pre)
                    t_b, timed_out = baseline_median(q, backend, k, timeout)
                instances.append(EvalInstance(str(d["id"]), program, d["marker"], float(t_b),
                                              timed_out, pre))
            except (KeyError, ValueError, TypeError) as exc:
                ident = d.get("id") if isinstance(d, dict) else None
                log.warning("line %d skipped: %s", lineno, exc)
                skipped.append({"line": lineno, "id": ident, "reason": str(exc)})
    return instances, skipped


def run_evaluation(instances, backend: OracleBackend, model, timeout: float = DEFAULT_TIMEOUT,
                   workers: int = 4) -> list[EvalRecord]:
    """Evaluate every instance; records come back in input order."""
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda inst: evaluate_instance(inst, backend, model, timeout), instances))


@dataclass
class EvaluationSummary:
    overall: MetricsReport
    easy: MetricsReport
    hard: MetricsReport
    hard_threshold: float
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.to_dict(),
            "easy": self.easy.to_dict(),
            "hard": self.hard.to_dict(),
            "hard_threshold": self.hard_threshold,
        }


def summarize(records, threshold: float = DEFAULT_HARD_THRESHOLD,
              include_latency: bool = True) -> EvaluationSummary:
    records = list(records)
    easy_ids, hard_ids = partition_easy_hard({r.id: r.t_b for r in records}, threshold)
    hard = set(hard_ids)
    return EvaluationSummary(
        compute_metrics(records, include_latency),
        compute_metrics([r for r in records if r.id not in hard], include_latency),
        compute_metrics([r for r in records if r.id in hard], include_latency),
        threshold,
    )


def write_outputs(records, summary: EvaluationSummary, out_dir, with_csv: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    (out / "metrics.json").write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    if with_csv:
        cols = ["id", "valid", "correct", "speedup", "outcome", "t_m", "t1", "t2", "t_v", "t_b", "S", "vbs"]
        with open(out / "timings.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in records:
                w.writerow([getattr(r, c) for c in cols])


def format_table(summary: EvaluationSummary) -> str:
    def cell(v, pct=False):
        if v is None:
            return "-"
        return f"{v:.1f}%" if pct else (f"{v:.2f}" if isinstance(v, float) else str(v))

    head = f"{'split':<8}{'n':>5}{'R_valid':>10}{'R_correct':>11}{'R_speedup':>11}" \
           f"{'S>1':>8}{'VBP':>10}{'VBP_E2E':>10}{'solved':>8}"
    rows = [head]
    for name in ("overall", "easy", "hard"):
        m = getattr(summary, name)
        rows.append(f"{name:<8}{m.n:>5}{cell(m.R_valid, True):>10}{cell(m.R_correct, True):>11}"
                    f"{cell(m.R_speedup, True):>11}{cell(m.S_mean_speedup):>8}{cell(m.VBP):>10}"
                    f"{cell(m.VBP_E2E):>10}{m.solved_timeouts:>8}")
    return "\n".join(rows)
