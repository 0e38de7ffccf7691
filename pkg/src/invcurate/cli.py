"""``invcurate`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from .config import ToolConfig, load_config
from .curate import dataset_stats, load_jsonl, run_pipeline
from .evaluate import (
    ReplayGenerator,
    format_table,
    read_eval_instances,
    run_evaluation,
    summarize,
    write_outputs,
)
from .grade import grade_candidate
from .llm import make_client
from .normalize import RULES, normalize
from .predicate import PredicateSyntaxError, expr_metrics, parse_predicate, print_minimal
from .verify import Program, Property, VerificationQuery, measure_baseline

log = logging.getLogger("invcurate")


def _read_invariant_lines(path):
    """Yield (lineno, id, text); lines are JSON objects or bare C expressions."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            ident = str(lineno)
            if text.startswith("{"):
                try:
                    d = json.loads(text)
                except json.JSONDecodeError:
                    d = None
                if isinstance(d, dict):
                    ident = str(d.get("id", ident))
                    text = d.get("raw_invariant", d.get("invariant", ""))
            yield lineno, ident, text


def cmd_normalize(in_path, out_path) -> dict:
    fired = Counter()
    casts = written = 0
    skipped = []
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as out:
        for lineno, ident, text in _read_invariant_lines(in_path):
            try:
                expr = parse_predicate(text)
            except PredicateSyntaxError as exc:
                log.warning("line %d skipped: %s", lineno, exc)
                skipped.append(lineno)
                continue
            norm, report = normalize(expr, drop_casts=True)
            fired.update(report.rules_fired)
            casts += report.casts_stripped
            m = expr_metrics(norm)
            out.write(json.dumps({
                "id": ident,
                "invariant": print_minimal(norm),
                "char_length": m.char_length,
                "num_disjuncts": m.num_disjuncts,
                "normalization": report.to_dict(),
            }) + "\n")
            written += 1
    return {
        "written": written,
        "skipped": len(skipped),
        "skipped_lines": skipped,
        "casts_stripped": casts,
        "rules_fired": {r: fired.get(r, 0) for r in RULES},
    }


def cmd_curate(cfg: ToolConfig, input_path) -> dict:
    manifest = run_pipeline(input_path, cfg, cfg.make_backend(), make_client(cfg.llm))
    return {"out_dir": cfg.out_dir, **manifest["counts"]}


def cmd_grade(cfg: ToolConfig, invariants_path) -> dict:
    """Grade candidate invariants: JSONL of {id, program, marker, invariant, t_b?}."""
    backend = cfg.make_backend()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts, failures = Counter(), 0
    with open(invariants_path, encoding="utf-8") as fh, \
            open(out_dir / "graded.jsonl", "w", encoding="utf-8") as out:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                program = Program.from_source(d["program"])
                pre = [Property(p["marker"], parse_predicate(p["predicate"]))
                       for p in d.get("preconditions") or ()]
                query = VerificationQuery.from_program(program, pre)
                t_b = d.get("t_b") or measure_baseline(backend, query, cfg.k, cfg.timeout).t_b
                gc = grade_candidate(query, d["marker"], d["invariant"], t_b, backend,
                                     cfg.timeout, cfg.grading_runs)
            except Exception as exc:  # soft failure: report and keep going
                failures += 1
                log.warning("line %d failed: %s", lineno, exc)
                continue
            counts[gc.grade] += 1
            row = {"id": d.get("id", str(lineno)), "marker": d["marker"], "invariant": d["invariant"],
                   "grade": gc.grade, "t_b": t_b, "t_v": gc.t_v}
            if gc.split is not None:
                row.update(v1=gc.split.v1.outcome.value, v2=gc.split.v2.outcome.value,
                           t1=gc.split.v1.wall_time, t2=gc.split.v2.wall_time)
            out.write(json.dumps(row, sort_keys=True) + "\n")
    return {"graded": sum(counts.values()), "failures": failures,
            "per_grade": {str(g): counts[g] for g in sorted(counts)}}


def cmd_evaluate(cfg: ToolConfig, input_path, from_file=None, with_csv=True) -> dict:
    backend = cfg.make_backend()
    model = ReplayGenerator.load(from_file) if from_file else make_client(cfg.llm)
    instances, skipped = read_eval_instances(input_path, backend, cfg.k, cfg.timeout)
    workers = 1 if cfg.serial else cfg.workers
    records = run_evaluation(instances, backend, model, cfg.timeout, workers)
    summary = summarize(records, cfg.hard_threshold)
    summary.skipped = skipped
    write_outputs(records, summary, cfg.out_dir, with_csv)
    print(format_table(summary))
    return {"evaluated": len(records), "skipped": len(skipped), "out_dir": cfg.out_dir}


def cmd_stats(dataset_path) -> dict:
    paths = [Path(p) for p in dataset_path]
    samples = []
    for p in paths:
        files = sorted(p.glob("v*.jsonl")) if p.is_dir() else [p]
        for f in files:
            samples.extend(load_jsonl(f))
    return dataset_stats(samples).to_dict()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--backend", choices=["builtin", "external"])
    common.add_argument("--keep-artifacts", metavar="DIR", help="keep annotated programs and verifier logs")
    common.add_argument("--out", dest="out_dir", help="output directory")
    common.add_argument("--workers", type=int)
    common.add_argument("--timeout", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--serial", action="store_true", default=None,
                        help="one instance at a time (timing-sensitive runs)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="invcurate", description="Loop-invariant curation and evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("normalize", parents=[common], help="normalize raw invariants (V0 -> V1)")
    s.add_argument("input")
    s.add_argument("output")

    s = sub.add_parser("curate", parents=[common], help="run the V0 -> V1 -> V2 pipeline")
    s.add_argument("input", help="raw instances JSONL")
    s.add_argument("--eta", type=int, help="verbosity threshold in characters")
    s.add_argument("-n", "--n-candidates", type=int)
    s.add_argument("-k", type=int, help="baseline repetitions")

    s = sub.add_parser("grade", parents=[common], help="grade candidate invariants")
    s.add_argument("input", help="JSONL of {id, program, marker, invariant, t_b?}")
    s.add_argument("-k", type=int)

    s = sub.add_parser("evaluate", parents=[common], help="evaluate a model or replayed outputs")
    s.add_argument("input", help="evaluation instances JSONL")
    s.add_argument("--from-file", help="replay JSONL of {id, output, t_m}")
    s.add_argument("--threshold", dest="hard_threshold", type=float)
    s.add_argument("-k", type=int)
    s.add_argument("--no-csv", action="store_true")

    s = sub.add_parser("stats", parents=[common], help="dataset statistics")
    s.add_argument("dataset", nargs="+", help="JSONL files or curation output directories")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "normalize":
            result = cmd_normalize(args.input, args.output)
        elif args.command == "stats":
            result = cmd_stats(args.dataset)
        else:
            overrides = {key: getattr(args, key, None) for key in (
                "backend", "keep_artifacts", "out_dir", "workers", "timeout", "seed", "serial",
                "eta", "n_candidates", "k", "hard_threshold")}
            cfg = load_config(args.config, overrides)
            if args.command == "curate":
                result = cmd_curate(cfg, args.input)
            elif args.command == "grade":
                result = cmd_grade(cfg, args.input)
            else:
                result = cmd_evaluate(cfg, args.input, args.from_file, not args.no_csv)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
