"""story-spine command line: parse, extract, build datasets, evaluate.

Every command that produces an output directory also writes a manifest.json
(config hash, template versions, cache entry count) so a run can be replayed
byte-identically against the same cache. The manifest deliberately records
the cache entry count rather than hit/miss counters: reruns served from the
cache must produce the same manifest bytes.

Exit codes:
  0  success
  1  unexpected internal error
  2  usage error
  3  input error (markup, empty document, missing or malformed file)
  4  backend error (auth, network, rate limit after retries)
  5  pipeline aborted; checkpoints allow resuming with the same command
  6  dataset build error (incomplete run, missing gold, impossible budget)
  7  evaluation error (empty reference/source, unparseable verdict)
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from .backend import (
    CachedBackend,
    HttpBackend,
    ResponseCache,
    ScriptedBackend,
)
from .distill import (
    build_distill,
    build_sum,
    join_backbone,
    pack_fewshot,
    split_records,
    write_distill_jsonl,
    write_packed_jsonl,
    write_sum_jsonl,
)
from .errors import (
    AuthError,
    BackendError,
    BudgetImpossible,
    ContractViolation,
    EmptyDocument,
    EmptyReference,
    EmptySource,
    IncompleteRun,
    MalformedMarkup,
    MissingGold,
    PipelineAborted,
    StorySpineError,
)
from .evaluation import (
    chapter_share_stats,
    compression_ratio,
    export_rubric,
    judge_dimensions,
    judge_ood,
    rouge_l,
    rouge_n,
    scene_length_stats,
    write_chapter_share_csv,
    write_scene_stats_csv,
)
from .ingest import (
    DEFAULT_CHAPTER_PATTERN,
    TagSchema,
    parse_prose,
    parse_script,
    read_canonical_json,
    write_canonical_json,
)
from .pipeline import (
    NEAgent,
    PipelineConfig,
    UnitLabel,
    config_fingerprint,
    scene_result_from_dict,
    scene_result_to_dict,
)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_BACKEND = 4
EXIT_ABORTED = 5
EXIT_DATASET = 6
EXIT_EVAL = 7


def _load_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_manifest(out_dir: Path, command: str, config_hash: str,
                    templates=None, cache=None, outputs=()) -> None:
    manifest = {
        "command": command,
        "config_hash": config_hash,
        "template_versions": (
            {t.id.value: t.version for t in templates.values()} if templates else {}
        ),
        "cache_entries": len(cache) if cache is not None else 0,
        "outputs": sorted(outputs),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _make_backend(args) -> tuple[object, ResponseCache | None]:
    if args.backend == "mock":
        if not args.mock_script:
            raise ValueError("--backend mock requires --mock-script")
        inner = ScriptedBackend.from_file(args.mock_script)
    else:
        inner = HttpBackend.from_env()
    if getattr(args, "cache", None):
        cache = ResponseCache(args.cache)
        return CachedBackend(inner, cache), cache
    return inner, None


def _judge_backends(pairs: list[str]) -> dict[str, object]:
    judges = {}
    for pair in pairs:
        name, sep, target = pair.partition("=")
        if not sep or not name or not target:
            raise ValueError(f"--judge expects name=script.json, got {pair!r}")
        judges[name] = ScriptedBackend.from_file(target)
    return judges


# --- command handlers --------------------------------------------------------

def cmd_parse(args) -> int:
    raw = Path(args.input).read_text(encoding="utf-8")
    if args.format == "xml":
        schema = TagSchema.from_file(args.schema) if args.schema else TagSchema()
        screenplay = parse_script(raw, schema, doc_id=args.doc_id, title=args.title)
    else:
        pattern = args.chapter_pattern or DEFAULT_CHAPTER_PATTERN
        screenplay = parse_prose(raw, pattern, doc_id=args.doc_id, title=args.title)
    write_canonical_json(screenplay, args.output)
    for warning in screenplay.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {args.output} ({len(screenplay.scenes)} scenes)")
    return EXIT_OK


def _pick(flag, file_config: dict, key: str, default):
    if flag is not None:
        return flag
    if key in file_config:
        return file_config[key]
    return default


def cmd_extract(args) -> int:
    file_config = _load_json(args.config) if args.config else {}
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = PipelineConfig(
        model=_pick(args.model, file_config, "model", "mock"),
        vote_attempts=int(_pick(args.attempts, file_config, "vote_attempts", 3)),
        input_budget=int(_pick(args.input_budget, file_config, "input_budget", 32768)),
        output_budget=int(_pick(args.output_budget, file_config, "output_budget", 1024)),
        no_trajectory_profiling=(
            args.ablation == "no-trajectory"
            or bool(file_config.get("no_trajectory_profiling"))
        ),
        prompt_dir=_pick(args.prompt_dir, file_config, "prompt_dir", None),
        chars_per_token=float(
            _pick(None, file_config, "chars_per_token", 4.0)
        ),
        checkpoint_dir=str(out_dir / "checkpoints"),
    )
    screenplay = read_canonical_json(args.screenplay)
    backend, cache = _make_backend(args)
    agent = NEAgent(backend, config)
    result = agent.run(screenplay)

    backbone_text = join_backbone(result.backbone)
    (out_dir / "backbone.txt").write_text(backbone_text + "\n", encoding="utf-8")
    with open(out_dir / "results.json", "w", encoding="utf-8") as fh:
        json.dump(
            [scene_result_to_dict(r) for r in result.scenes],
            fh,
            ensure_ascii=False,
            indent=2,
        )
        fh.write("\n")
    with open(out_dir / "backbones.json", "w", encoding="utf-8") as fh:
        json.dump({screenplay.id: backbone_text}, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    _write_manifest(
        out_dir,
        "extract",
        config_fingerprint(config),
        templates=agent.templates,
        cache=cache,
        outputs=["backbone.txt", "results.json", "backbones.json"],
    )
    nuclei = sum(
        1 for r in result.scenes for u in r.units if u.label is UnitLabel.NUCLEUS
    )
    print(
        f"extracted {nuclei} nuclei over {len(result.scenes)} scenes -> {out_dir}"
    )
    return EXIT_OK


def cmd_build_distill(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = [scene_result_from_dict(d) for d in _load_json(args.results)]
    records = build_distill(results, document_id=args.doc_id)
    write_distill_jsonl(records, out_dir / "distill.jsonl")
    pack = pack_fewshot(
        records,
        n_shots=args.shots,
        budgets=(args.input_budget, args.output_budget),
        seed=args.seed,
    )
    outputs = ["distill.jsonl", "packed_train.jsonl"]
    if args.split is not None:
        train, held_out = split_records(pack.examples, ratio=args.split, seed=args.seed)
        write_packed_jsonl(train, out_dir / "packed_train.jsonl")
        write_packed_jsonl(held_out, out_dir / "packed_val.jsonl")
        outputs.append("packed_val.jsonl")
    else:
        write_packed_jsonl(pack.examples, out_dir / "packed_train.jsonl")
    if pack.skipped:
        with open(out_dir / "skipped.json", "w", encoding="utf-8") as fh:
            json.dump(
                [{"scene_id": s, "reason": r} for s, r in pack.skipped],
                fh,
                indent=2,
            )
            fh.write("\n")
        outputs.append("skipped.json")
    params = json.dumps(
        {
            "shots": args.shots,
            "seed": args.seed,
            "input_budget": args.input_budget,
            "output_budget": args.output_budget,
            "split": args.split,
        },
        sort_keys=True,
    )
    _write_manifest(
        out_dir,
        "build-distill",
        hashlib.sha256(params.encode()).hexdigest()[:16],
        outputs=outputs,
    )
    print(
        f"built {len(records)} records, {len(pack.examples)} packed examples,"
        f" {len(pack.skipped)} skipped -> {out_dir}"
    )
    return EXIT_OK


def cmd_build_sum(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backbones = _load_json(args.backbones)
    gold = _load_json(args.gold)
    records = build_sum(backbones, gold)
    write_sum_jsonl(records, out_dir / "sum.jsonl")
    digest = hashlib.sha256(
        json.dumps(sorted(backbones), sort_keys=True).encode()
    ).hexdigest()[:16]
    _write_manifest(out_dir, "build-sum", digest, outputs=["sum.jsonl"])
    print(f"built {len(records)} summarization records -> {out_dir}")
    return EXIT_OK


def cmd_eval_rouge(args) -> int:
    candidate = Path(args.candidate).read_text(encoding="utf-8")
    reference = Path(args.reference).read_text(encoding="utf-8")
    scores = {
        "rouge1": rouge_n(candidate, reference, 1, stem=args.stem),
        "rouge2": rouge_n(candidate, reference, 2, stem=args.stem),
        "rougeL": rouge_l(candidate, reference, stem=args.stem),
    }
    print(
        json.dumps(
            {
                name: {
                    "precision": round(s.precision, 6),
                    "recall": round(s.recall, 6),
                    "f1": round(s.f1, 6),
                }
                for name, s in scores.items()
            },
            indent=2,
        )
    )
    return EXIT_OK


def cmd_eval_comp(args) -> int:
    backbone = Path(args.backbone).read_text(encoding="utf-8")
    source = Path(args.source).read_text(encoding="utf-8")
    value = compression_ratio(backbone, source)
    print(json.dumps({"compression_pct": round(value, 4)}))
    return EXIT_OK


def _nuclei_per_scene(results_path: str) -> dict[int, list[str]]:
    results = [scene_result_from_dict(d) for d in _load_json(results_path)]
    return {
        r.naturalized.scene_index: list(r.nucleus_texts) for r in results
    }


def cmd_eval_stats(args) -> int:
    screenplay = read_canonical_json(args.screenplay)
    nuclei = _nuclei_per_scene(args.results)
    scene_rows = scene_length_stats(screenplay, nuclei)
    chapter_rows = chapter_share_stats(screenplay, nuclei)
    write_scene_stats_csv(scene_rows, args.scene_csv)
    write_chapter_share_csv(chapter_rows, args.chapter_csv)
    print(f"wrote {args.scene_csv} and {args.chapter_csv}")
    return EXIT_OK


def cmd_eval_judge_ood(args) -> int:
    nuclei_sets = _load_json(args.nuclei)
    if not isinstance(nuclei_sets, list) or not all(
        isinstance(x, str) for x in nuclei_sets
    ):
        raise ValueError("--nuclei file must hold a JSON array of strings")
    judges = _judge_backends(args.judge)
    report = judge_ood(nuclei_sets, judges)
    text = json.dumps(report.to_dict(), indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        print(text)
    return EXIT_OK


def cmd_eval_judge_dims(args) -> int:
    backbone = Path(args.backbone).read_text(encoding="utf-8")
    judges = _judge_backends([f"judge={args.judge}"])
    scores = judge_dimensions(backbone, judges["judge"])
    print(
        json.dumps(
            {
                "indispensability": scores.indispensability,
                "coherence": scores.coherence,
                "character_consistency": scores.character_consistency,
                "satellite_reduction": scores.satellite_reduction,
            },
            indent=2,
        )
    )
    return EXIT_OK


def cmd_eval_rubric(args) -> int:
    sheet = export_rubric()
    if args.output:
        Path(args.output).write_text(sheet + "\n", encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        print(sheet)
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="story-spine",
        description="Narrative-backbone extraction pipeline",
        epilog=(
            "exit codes: 0 ok, 1 unexpected, 2 usage, 3 input, 4 backend,"
            " 5 aborted (resumable), 6 dataset, 7 evaluation"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a screenplay or prose file to canonical JSON")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("xml", "prose"), default="xml")
    p.add_argument("--schema", help="tag-schema JSON file (xml format only)")
    p.add_argument("--chapter-pattern", help="chapter delimiter regex (prose format)")
    p.add_argument("--doc-id", default="doc")
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("extract", help="run the extraction agent over a parsed screenplay")
    p.add_argument("screenplay", help="canonical screenplay JSON")
    p.add_argument("--config", help="config JSON file (flags override it)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--backend", choices=("mock", "http"), default="http")
    p.add_argument("--mock-script", help="scripted-response rules JSON for --backend mock")
    p.add_argument("--cache", help="response cache JSONL path")
    p.add_argument("--model", default=None)
    p.add_argument("--attempts", type=int, default=None, help="voting attempts (K)")
    p.add_argument("--input-budget", type=int, default=None)
    p.add_argument("--output-budget", type=int, default=None)
    p.add_argument("--prompt-dir", default=None)
    p.add_argument(
        "--ablation",
        choices=("no-trajectory",),
        default=None,
        help="disable trajectory profiles in counterfactual prompts",
    )
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("build-distill", help="export distill.jsonl and packed_train.jsonl")
    p.add_argument("results", help="results.json from extract")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--doc-id", default="doc")
    p.add_argument("--shots", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input-budget", type=int, default=32768)
    p.add_argument("--output-budget", type=int, default=1024)
    p.add_argument("--split", type=float, default=None, help="train ratio for a seeded split")
    p.set_defaults(func=cmd_build_distill)

    p = sub.add_parser("build-sum", help="export sum.jsonl from backbones and gold summaries")
    p.add_argument("--backbones", required=True, help="JSON file: document id -> backbone")
    p.add_argument("--gold", required=True, help="JSON file: document id -> summary")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_build_sum)

    p = sub.add_parser("eval", help="metrics, judges, stats, rubric")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)

    e = eval_sub.add_parser("rouge", help="ROUGE-1/2/L between two text files")
    e.add_argument("--candidate", required=True)
    e.add_argument("--reference", required=True)
    e.add_argument("--stem", action="store_true")
    e.set_defaults(func=cmd_eval_rouge)

    e = eval_sub.add_parser("comp", help="compression percentage of backbone vs source")
    e.add_argument("--backbone", required=True)
    e.add_argument("--source", required=True)
    e.set_defaults(func=cmd_eval_comp)

    e = eval_sub.add_parser("stats", help="scene-length and chapter-share CSVs")
    e.add_argument("--screenplay", required=True)
    e.add_argument("--results", required=True)
    e.add_argument("--scene-csv", required=True)
    e.add_argument("--chapter-csv", required=True)
    e.set_defaults(func=cmd_eval_stats)

    e = eval_sub.add_parser("judge-ood", help="positive/negative/rejected tallies per judge")
    e.add_argument("--nuclei", required=True, help="JSON array of nucleus-set texts")
    e.add_argument(
        "--judge",
        action="append",
        required=True,
        help="name=scripted-rules.json (repeatable)",
    )
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_eval_judge_ood)

    e = eval_sub.add_parser("judge-dims", help="four rubric dimension scores")
    e.add_argument("--backbone", required=True)
    e.add_argument("--judge", required=True, help="scripted-rules.json")
    e.set_defaults(func=cmd_eval_judge_dims)

    e = eval_sub.add_parser("rubric", help="print the annotation rubric sheet")
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_eval_rubric)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except PipelineAborted as err:
        print(
            f"error: pipeline aborted at scene {err.completed_scenes}: {err}\n"
            "checkpoints were written; rerun the same command to resume",
            file=sys.stderr,
        )
        return EXIT_ABORTED
    except (AuthError, BackendError) as err:
        print(f"error: backend: {err}", file=sys.stderr)
        return EXIT_BACKEND
    except (IncompleteRun, MissingGold, BudgetImpossible) as err:
        print(f"error: dataset: {err}", file=sys.stderr)
        return EXIT_DATASET
    except (EmptyReference, EmptySource, ContractViolation) as err:
        print(f"error: evaluation: {err}", file=sys.stderr)
        return EXIT_EVAL
    except (MalformedMarkup, EmptyDocument) as err:
        print(f"error: input: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as err:
        print(f"error: input: {err}", file=sys.stderr)
        return EXIT_INPUT
    except StorySpineError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
