"""Dataset pipeline: raw verifier invariants (V0) to normalized (V1) to
simplified and verified (V2) training samples."""

from __future__ import annotations

import json
import logging
import math
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .config import ToolConfig
from .llm import LLMClient
from .normalize import is_degenerate, normalize
from .predicate import (
    PredicateSyntaxError,
    expr_metrics,
    parse_predicate,
    print_minimal,
)
from .simplify import SimplifyContext, SimplifyStats, simplify_invariant
from .verify import OracleBackend, Program, Property, VerificationQuery, measure_baseline

log = logging.getLogger(__name__)

STAGES = ("V0", "V1", "V2")


class SchemaError(ValueError):
    def __init__(self, violations: list[tuple[int, str]]):
        self.violations = violations
        lines = "; ".join(f"line {n}: {msg}" for n, msg in violations[:10])
        super().__init__(f"{len(violations)} schema violation(s): {lines}")


@dataclass
class RawInstance:
    id: str
    program: Program
    marker: str
    raw_invariant_text: str
    t_b: float | None = None
    preconditions: tuple[Property, ...] = ()


@dataclass
class CuratedSample:
    id: str
    stage: str
    program_text: str
    marker: str
    invariant_text: str
    char_length: int
    num_disjuncts: int
    grade: int | None = None
    t_b: float | None = None
    t1: float | None = None
    t2: float | None = None
    t_v: float | None = None
    source_rationale: str | None = None
    normalization: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


_REQUIRED = {
    "id": str, "stage": str, "program_text": str, "marker": str,
    "invariant_text": str, "char_length": int, "num_disjuncts": int,
}
_OPTIONAL_NUM = ("t_b", "t1", "t2", "t_v")


def _validate(d: dict) -> str | None:
    for key, typ in _REQUIRED.items():
        if key not in d:
            return f"missing field {key!r}"
        if not isinstance(d[key], typ) or isinstance(d[key], bool):
            return f"field {key!r} has the wrong type"
    unknown = set(d) - set(CuratedSample.__dataclass_fields__)
    if unknown:
        return f"unknown fields {sorted(unknown)}"
    if d["stage"] not in STAGES:
        return f"bad stage {d['stage']!r}"
    for key in _OPTIONAL_NUM:
        v = d.get(key)
        if v is not None and (not isinstance(v, (int, float)) or isinstance(v, bool)):
            return f"field {key!r} must be a number"
    g = d.get("grade")
    if g is not None and g not in (0, 1, 2, 3):
        return f"bad grade {g!r}"
    if d["stage"] == "V2" and (g is None or g < 2):
        return "V2 samples need grade >= 2"
    try:
        expr = parse_predicate(d["invariant_text"])
    except PredicateSyntaxError as exc:
        return f"invariant does not parse: {exc}"
    if d["stage"] != "V0" and print_minimal(expr) != d["invariant_text"]:
        return "invariant_text is not in canonical printed form"
    return None


def emit_jsonl(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")


def load_jsonl(path) -> list[CuratedSample]:
    """Read samples back, validating every line; raises SchemaError."""
    samples, bad = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                bad.append((lineno, f"invalid JSON: {exc}"))
                continue
            if not isinstance(d, dict):
                bad.append((lineno, "not a JSON object"))
                continue
            problem = _validate(d)
            if problem:
                bad.append((lineno, problem))
                continue
            samples.append(CuratedSample(**d))
    if bad:
        raise SchemaError(bad)
    return samples


# --------------------------------------------------------------------------
# Pipeline

def _sample(raw: RawInstance, stage: str, text: str, expr, **extra) -> CuratedSample:
    m = expr_metrics(expr)
    length = len(text.strip()) if stage == "V0" else m.char_length
    return CuratedSample(raw.id, stage, raw.program.source, raw.marker, text,
                         length, m.num_disjuncts, **extra)


def curate_instance(raw: RawInstance, cfg: ToolConfig, backend: OracleBackend,
                    llm: LLMClient) -> list[CuratedSample]:
    """V0, V1 and V2 samples for one (program, marker, raw invariant)."""
    try:
        parsed = parse_predicate(raw.raw_invariant_text)
    except PredicateSyntaxError as exc:
        log.warning("[%s] skipped: raw invariant does not parse: %s", raw.id, exc)
        return []
    norm, report = normalize(parsed, drop_casts=True)
    if is_degenerate(norm):
        log.info("[%s] skipped: degenerate invariant", raw.id)
        return []
    out = [
        _sample(raw, "V0", raw.raw_invariant_text.strip(), parsed),
        _sample(raw, "V1", print_minimal(norm), norm, normalization=report.to_dict()),
    ]
    query = VerificationQuery.from_program(raw.program, raw.preconditions)
    t_b = raw.t_b
    if t_b is None:
        t_b = measure_baseline(backend, query, cfg.k, cfg.timeout).t_b
    ctx = SimplifyContext(raw.program, norm, raw.marker, cfg.n_candidates, cfg.eta)
    stats = SimplifyStats()
    graded = simplify_invariant(query, raw.marker, norm, t_b, ctx, llm, backend,
                                cfg.timeout, cfg.grading_runs, stats)
    for gc in graded:
        out.append(_sample(
            raw, "V2", print_minimal(gc.predicate), gc.predicate,
            grade=gc.grade, t_b=t_b, t1=gc.split.v1.wall_time, t2=gc.split.v2.wall_time,
            t_v=gc.t_v, source_rationale=gc.rationale or None,
        ))
    log.info("[%s] %d V2 sample(s); sampled=%d malformed=%d duplicates=%d degenerate=%d",
             raw.id, len(graded), stats.sampled, stats.malformed, stats.duplicates, stats.degenerate)
    return out


def _props(items) -> tuple[Property, ...]:
    return tuple(Property(p["marker"], parse_predicate(p["predicate"])) for p in items or ())


def read_raw_instances(path) -> tuple[list[RawInstance], list[dict]]:
    """Parse the raw-instances JSONL; multi-loop records expand per marker."""
    instances, skipped = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                program = Program.from_source(d["program"])
                pre = _props(d.get("preconditions"))
                if "invariants" in d:
                    entries = [(e["marker"], e["raw_invariant"]) for e in d["invariants"]]
                    ids = [f"{d['id']}#{m}" for m, _ in entries]
                else:
                    entries = [(d["marker"], d["raw_invariant"])]
                    ids = [d["id"]]
                for iid, (marker, text) in zip(ids, entries):
                    if marker not in program.marker_names:
                        raise ValueError(f"marker {marker} not in program")
                    if not text or not text.strip():
                        raise ValueError("empty raw invariant")
                    t_b = d.get("t_b")
                    if t_b is not None and t_b <= 0:
                        raise ValueError("t_b must be positive")
                    instances.append(RawInstance(iid, program, marker, text, t_b, pre))
            except (KeyError, ValueError, TypeError) as exc:
                ident = d.get("id") if isinstance(locals().get("d"), dict) else None
                log.warning("line %d skipped: %s", lineno, exc)
                skipped.append({"line": lineno, "id": ident, "reason": str(exc)})
    return instances, skipped


def train_val_split(ids, seed: int, val_fraction: float = 0.2) -> dict:
    uniq = sorted(set(ids))
    random.Random(seed).shuffle(uniq)
    n_val = int(round(len(uniq) * val_fraction))
    return {"seed": seed, "train": sorted(uniq[n_val:]), "validation": sorted(uniq[:n_val])}


def run_pipeline(input_path, cfg: ToolConfig, backend: OracleBackend, llm: LLMClient) -> dict:
    """Curate every instance and write v0/v1/v2 JSONL plus a manifest."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instances, skipped = read_raw_instances(input_path)

    def work(raw):
        try:
            return curate_instance(raw, cfg, backend, llm)
        except Exception as exc:  # one bad instance must not abort the batch
            log.exception("[%s] failed", raw.id)
            skipped.append({"id": raw.id, "reason": f"{type(exc).__name__}: {exc}"})
            return []

    workers = 1 if cfg.serial else cfg.workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(work, instances))
    by_stage = {s: [] for s in STAGES}
    for samples in results:
        for s in samples:
            by_stage[s.stage].append(s)
    for stage, samples in by_stage.items():
        emit_jsonl(samples, out_dir / f"{stage.lower()}.jsonl")
    curated_ids = [s.id for s in by_stage["V2"]]
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "input": str(input_path),
        "counts": {
            "instances": len(instances),
            **{stage: len(v) for stage, v in by_stage.items()},
            "skipped": len(skipped),
        },
        "skipped": sorted(skipped, key=lambda s: (str(s.get("id")), s.get("line", 0))),
        "split": train_val_split(curated_ids, cfg.seed, cfg.val_fraction),
        "stats": dataset_stats([s for v in by_stage.values() for s in v]).to_dict(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return manifest


# --------------------------------------------------------------------------
# Statistics

def _dist(values) -> dict:
    values = list(values)
    if not values:
        return {"count": 0, "min": 0, "median": 0, "mean": 0, "max": 0}
    return {
        "count": len(values),
        "min": min(values),
        "median": statistics.median(values),
        "mean": math.fsum(values) / len(values),
        "max": max(values),
    }


@dataclass
class StatsReport:
    total: int = 0
    per_stage: dict = field(default_factory=dict)
    per_grade: dict = field(default_factory=dict)
    char_length: dict = field(default_factory=dict)
    speedup_grade3: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_stage": self.per_stage,
            "per_grade": {str(k): v for k, v in self.per_grade.items()},
            "char_length": self.char_length,
            "speedup_grade3": self.speedup_grade3,
        }


def dataset_stats(samples) -> StatsReport:
    samples = list(samples)
    per_stage = {s: sum(1 for x in samples if x.stage == s) for s in STAGES}
    grades = sorted({x.grade for x in samples if x.grade is not None})
    per_grade = {g: sum(1 for x in samples if x.grade == g) for g in grades}
    chars = {s: _dist(x.char_length for x in samples if x.stage == s) for s in STAGES}
    speedups = [x.t_b / x.t_v for x in samples
                if x.grade == 3 and x.t_b is not None and x.t_v]
    return StatsReport(len(samples), per_stage, per_grade, chars, _dist(speedups))


def training_messages(sample: CuratedSample) -> list[dict]:
    """Chat-format training example for a V2 sample using the generation prompt."""
    from .evaluate import GENERATION_SYSTEM_PROMPT, GENERATION_USER_TEMPLATE

    user = GENERATION_USER_TEMPLATE.format(program=sample.program_text, target_marker=sample.marker)
    answer = json.dumps({"marker": sample.marker, "content": sample.invariant_text}, separators=(",", ":"))
    return [
        {"role": "system", "content": GENERATION_SYSTEM_PROMPT},
        {"role": "user", "content": user},
        {"role": "assistant", "content": f"```json\n{answer}\n```"},
    ]
