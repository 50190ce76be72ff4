#!/usr/bin/env python3
"""Regenerate the kit's fixtures from the sibling story-spine package.

Accept-side fixtures are produced by the exporter itself, so validating them
here is a genuine cross-component check. Reject-side fixtures are verified
against the exporter's readers before they are written: every file under
rejects/ is one the sibling package also refuses to read.

Run from the repository root with story-spine installed:

    python3 finetune-kit/scripts/make_fixtures.py
"""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

from story_spine.distill import (
    DistillRecord,
    build_sum,
    pack_fewshot,
    read_distill_jsonl,
    read_packed_jsonl,
    read_sum_jsonl,
    write_packed_jsonl,
    write_sum_jsonl,
)
from story_spine.tokens import estimate_tokens

KIT = Path(__file__).resolve().parent.parent
REPO = KIT.parent
FIXTURES = KIT / "fixtures"

SCENES = [
    ("wharf:0", "Anna unties the skiff at the wharf and rows for the light.",
     ("Anna reaches open water",)),
    ("wharf:1", "The harbormaster logs a missing skiff and says nothing.",
     ()),
    ("cliff:0", "Tomas climbs the cliff path carrying the signal lamp.",
     ("Tomas lights the signal lamp",)),
    ("cliff:1", "Gulls scatter when the lamp flares over the cove.",
     ("The cove is lit",)),
    ("cove:0", "Anna rows into the lit cove and beaches the skiff.",
     ("Anna lands in the cove",)),
]


def make_packed_five() -> None:
    records = []
    for scene_id, text, nuclei in SCENES:
        trace = "\n".join(
            [f"SCENE {scene_id} NOTES",
             f"  unit: {text}",
             f"  verdict: {'nucleus' if nuclei else 'satellite'}"]
        )
        records.append(
            DistillRecord(
                scene_id=scene_id,
                input_text=text,
                reasoning_trace=trace,
                nuclei=nuclei,
            )
        )
    pack = pack_fewshot(records, n_shots=2, budgets=(32768, 1024), seed=7)
    assert len(pack.examples) == 5 and not pack.skipped
    write_packed_jsonl(pack.examples, FIXTURES / "packed_five.jsonl")
    read_packed_jsonl(FIXTURES / "packed_five.jsonl")

    rows = [json.loads(line) for line in
            (FIXTURES / "packed_five.jsonl").read_text().splitlines()]
    rows[2]["input"] = "x" * 140_000
    assert estimate_tokens(
        rows[2]["system"] + rows[2]["instruction"] + rows[2]["input"]
    ) > 32768
    with open(FIXTURES / "packed_overbudget.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def make_sum_five() -> None:
    backbones = {
        "wharf": "Anna unties the skiff. Anna reaches open water.",
        "cliff": "Tomas lights the signal lamp. The cove is lit.",
        "cove": "Anna lands in the cove.",
        "letter": "Leon carries the sealed letter to the gate.",
        "verdict": "The magistrate reads the verdict aloud.",
    }
    gold = {
        "wharf": "Anna slips out of the harbor by skiff.",
        "cliff": "Tomas lights the cove from the cliff.",
        "cove": "Anna comes ashore in the lit cove.",
        "letter": "Leon delivers a sealed letter.",
        "verdict": "A verdict is read to the town.",
    }
    records = build_sum(backbones, gold)
    write_sum_jsonl(records, FIXTURES / "sum_five.jsonl")
    read_sum_jsonl(FIXTURES / "sum_five.jsonl")


def make_primary_run() -> None:
    out = FIXTURES / "primary-run"
    shutil.rmtree(out, ignore_errors=True)
    out.mkdir(parents=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        run = [sys.executable, "-m", "story_spine.cli"]
        subprocess.run(
            run + ["parse", str(REPO / "tests/fixtures/two_scene.xml"),
                   "-o", str(tmp / "screenplay.json"),
                   "--doc-id", "two_scene", "--title", "Two Scenes"],
            check=True, cwd=REPO)
        subprocess.run(
            run + ["extract", str(tmp / "screenplay.json"),
                   "--out-dir", str(tmp / "run"), "--backend", "mock",
                   "--mock-script",
                   str(REPO / "tests/fixtures/two_scene_rules.json")],
            check=True, cwd=REPO)
        subprocess.run(
            run + ["build-distill", str(tmp / "run/results.json"),
                   "--out-dir", str(tmp / "data"), "--doc-id", "two_scene",
                   "--shots", "1", "--split", "0.5"],
            check=True, cwd=REPO)
        gold = tmp / "gold.json"
        gold.write_text(json.dumps(
            {"two_scene": "Leon delivers a sealed letter."}) + "\n")
        subprocess.run(
            run + ["build-sum", "--backbones", str(tmp / "run/backbones.json"),
                   "--gold", str(gold), "--out-dir", str(tmp / "data")],
            check=True, cwd=REPO)
        for name in ("distill.jsonl", "packed_train.jsonl",
                     "packed_val.jsonl", "sum.jsonl"):
            shutil.copy(tmp / "data" / name, out / name)


REJECTS = {
    "packed_missing_output.jsonl": (
        read_packed_jsonl,
        [{"system": "s", "instruction": "i", "input": "q"}],
    ),
    "packed_blank_input.jsonl": (
        read_packed_jsonl,
        [{"system": "s", "instruction": "i", "input": "   ", "output": "o"}],
    ),
    "packed_nonstring_system.jsonl": (
        read_packed_jsonl,
        [{"system": 3, "instruction": "i", "input": "q", "output": "o"}],
    ),
    "distill_missing_nuclei.jsonl": (
        read_distill_jsonl,
        [{"scene_id": "a:0", "input_text": "t", "reasoning_trace": "r"}],
    ),
    "distill_blank_scene_id.jsonl": (
        read_distill_jsonl,
        [{"scene_id": " ", "input_text": "t", "reasoning_trace": "r",
          "nuclei": ["n"]}],
    ),
    "sum_blank_backbone.jsonl": (
        read_sum_jsonl,
        [{"document_id": "d", "backbone": "", "summary": "s"}],
    ),
    "sum_missing_summary.jsonl": (
        read_sum_jsonl,
        [{"document_id": "d", "backbone": "b"}],
    ),
}


def make_rejects() -> None:
    rejects = FIXTURES / "rejects"
    rejects.mkdir(parents=True, exist_ok=True)
    for name, (reader, rows) in REJECTS.items():
        path = rejects / name
        with open(path, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        try:
            reader(path)
        except Exception:
            pass
        else:
            raise AssertionError(f"{name}: the sibling reader accepted it")
    bad = rejects / "not_json.jsonl"
    bad.write_text("{nope\n")
    try:
        read_packed_jsonl(bad)
    except Exception:
        pass
    else:
        raise AssertionError("not_json.jsonl: the sibling reader accepted it")


def make_bertscore_pairs() -> None:
    pairs = [
        ("Anna rows the skiff across the dark harbor water.",
         "Anna rows a small skiff over the dark harbor."),
        ("Tomas lights the signal lamp on the cliff.",
         "On the cliff, Tomas lights a signal lamp."),
        ("The magistrate reads the sealed letter aloud.",
         "A sealed letter is read aloud by the magistrate."),
        ("Gulls scatter when the lamp flares over the cove.",
         "The flaring lamp scatters gulls above the cove."),
        ("Leon walks the road toward the village gate.",
         "Leon walks toward the gate of the village."),
        ("The harbormaster logs a missing skiff.",
         "A missing skiff is noted by the harbormaster."),
    ]
    bs = FIXTURES / "bertscore"
    bs.mkdir(parents=True, exist_ok=True)
    (bs / "candidates.txt").write_text(
        "\n".join(c for c, _ in pairs) + "\n")
    (bs / "references.txt").write_text(
        "\n".join(r for _, r in pairs) + "\n")


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    make_packed_five()
    make_sum_five()
    make_primary_run()
    make_rejects()
    make_bertscore_pairs()
    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    main()
