"""Build and export the distillation and summarization datasets.

Three exported files, one JSON record per line:
  distill.jsonl      {"scene_id", "input_text", "reasoning_trace", "nuclei"}
  packed_train.jsonl {"system", "instruction", "input", "output"}
  sum.jsonl          {"document_id", "backbone", "summary"}

The packed view is the instruction-tuning shape downstream trainers consume:
few-shot examples are folded into the instruction, the query scene into the
input, and the trace-plus-nuclei serialization into the output. Packing is
budget-safe: every packed example's estimated input tokens stay at or under
the input budget (shots are dropped longest-first to make room), and records
whose query or target cannot fit under any packing are skipped with a logged
reason rather than exported oversized.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import BudgetImpossible, IncompleteRun, MissingGold
from .pipeline import SceneResult, UnitLabel
from .tokens import estimate_tokens

logger = logging.getLogger(__name__)

PACKED_SYSTEM_TEXT = (
    "You are a narrative analyst. Given a scene, produce the symbolic"
    " reasoning trace and the scene's nucleus events."
)
PACKED_DIRECTIVE = (
    "Analyze the scene. Reply with a TRACE: section containing the reasoning"
    " trace, then a NUCLEI: section listing one nucleus event per line as"
    " \"- <event>\", or \"(none)\" when the scene has no nuclei."
)


@dataclass(frozen=True)
class DistillRecord:
    scene_id: str
    input_text: str
    reasoning_trace: str
    nuclei: tuple[str, ...]

    def __post_init__(self):
        if not self.scene_id.strip():
            raise ValueError("scene_id must be non-empty")
        if not self.input_text.strip():
            raise ValueError("input_text must be non-empty")
        if not self.reasoning_trace.strip():
            raise ValueError("reasoning_trace must be non-empty")


@dataclass(frozen=True)
class PackedExample:
    shots: tuple[tuple[str, str, tuple[str, ...]], ...]
    query_input: str
    target: tuple[str, tuple[str, ...]]
    token_estimate: int


@dataclass(frozen=True)
class SumRecord:
    document_id: str
    backbone: str
    summary: str

    def __post_init__(self):
        if not self.backbone.strip():
            raise ValueError(f"backbone for {self.document_id!r} is empty")
        if not self.summary.strip():
            raise ValueError(f"summary for {self.document_id!r} is empty")


def build_distill(
    scene_results: Sequence[SceneResult], document_id: str = "doc"
) -> list[DistillRecord]:
    """One record per scene with content; content-free scenes are logged.

    Raises IncompleteRun when a scene has sentences but no labels or trace,
    which marks an aborted extraction rather than a degenerate scene.
    """
    records = []
    for result in scene_results:
        naturalized = result.naturalized
        scene_id = f"{document_id}:{naturalized.scene_index}"
        if not naturalized.sentences:
            logger.info("skipping %s: scene has no sentences", scene_id)
            continue
        if not result.units or not result.trace.strip():
            raise IncompleteRun(f"{scene_id} lacks unit labels or a trace")
        if any(u.label is UnitLabel.UNLABELED for u in result.units):
            raise IncompleteRun(f"{scene_id} contains unlabeled units")
        records.append(
            DistillRecord(
                scene_id=scene_id,
                input_text=" ".join(naturalized.sentences),
                reasoning_trace=result.trace,
                nuclei=result.nucleus_texts,
            )
        )
    return records


def _render_nuclei(nuclei: Sequence[str]) -> str:
    if not nuclei:
        return "(none)"
    return "\n".join(f"- {n}" for n in nuclei)


def _render_shot(x: str, r: str, b: Sequence[str]) -> str:
    return f"SCENE:\n{x}\nTRACE:\n{r}\nNUCLEI:\n{_render_nuclei(b)}"


def render_target(trace: str, nuclei: Sequence[str]) -> str:
    return f"TRACE:\n{trace}\nNUCLEI:\n{_render_nuclei(nuclei)}"


def _render_instruction(shots: Sequence[tuple[str, str, tuple[str, ...]]]) -> str:
    if not shots:
        return PACKED_DIRECTIVE
    rendered = "\n\n---\n\n".join(_render_shot(x, r, b) for x, r, b in shots)
    return f"{PACKED_DIRECTIVE}\n\nEXAMPLES:\n\n{rendered}"


@dataclass(frozen=True)
class PackResult:
    examples: tuple[PackedExample, ...]
    skipped: tuple[tuple[str, str], ...]  # (scene_id, reason)


def pack_fewshot(
    records: Sequence[DistillRecord],
    n_shots: int = 2,
    budgets: tuple[int, int] = (32768, 1024),
    seed: int = 0,
    estimator: Callable[[str], int] = estimate_tokens,
) -> PackResult:
    """Pack every record as a few-shot example under the token budgets.

    Shot selection is a seeded uniform draw from the other scenes, so a fixed
    seed reproduces the packing byte for byte. When an assembled example
    exceeds the input budget, shots are dropped longest first. A record whose
    query alone is over budget, or whose target serialization exceeds the
    output budget, is skipped with a logged reason. BudgetImpossible signals
    that the fixed prompt scaffold by itself exceeds the input budget, so no
    record could ever fit.
    """
    if n_shots < 0:
        raise ValueError("n_shots must be >= 0")
    if len(records) < n_shots + 1:
        raise ValueError(
            f"need at least {n_shots + 1} records to pack {n_shots}-shot examples"
        )
    input_budget, output_budget = budgets
    overhead = estimator(PACKED_SYSTEM_TEXT + _render_instruction(()))
    if overhead > input_budget:
        raise BudgetImpossible(
            f"prompt scaffold alone is ~{overhead} tokens, over the"
            f" {input_budget}-token input budget"
        )

    rng = random.Random(seed)
    examples: list[PackedExample] = []
    skipped: list[tuple[str, str]] = []
    for record in records:
        target_text = render_target(record.reasoning_trace, record.nuclei)
        if estimator(target_text) > output_budget:
            reason = "target serialization exceeds the output budget"
            logger.warning("skipping %s: %s", record.scene_id, reason)
            skipped.append((record.scene_id, reason))
            continue
        if _packed_estimate((), record.input_text, estimator) > input_budget:
            reason = "query alone exceeds the input budget"
            logger.warning("skipping %s: %s", record.scene_id, reason)
            skipped.append((record.scene_id, reason))
            continue

        pool = [r for r in records if r.scene_id != record.scene_id]
        count = min(n_shots, len(pool))
        chosen = rng.sample(pool, count) if count else []
        shots = [(r.input_text, r.reasoning_trace, r.nuclei) for r in chosen]
        while shots and _packed_estimate(shots, record.input_text, estimator) > input_budget:
            longest = max(
                range(len(shots)),
                key=lambda i: estimator(_render_shot(*shots[i])),
            )
            shots.pop(longest)
        examples.append(
            PackedExample(
                shots=tuple(shots),
                query_input=record.input_text,
                target=(record.reasoning_trace, record.nuclei),
                token_estimate=_packed_estimate(shots, record.input_text, estimator),
            )
        )
    return PackResult(tuple(examples), tuple(skipped))


def _packed_estimate(
    shots: Sequence[tuple[str, str, tuple[str, ...]]],
    query_input: str,
    estimator: Callable[[str], int],
) -> int:
    return estimator(PACKED_SYSTEM_TEXT + _render_instruction(shots) + query_input)


def build_sum(
    backbones: Mapping[str, str], gold: Mapping[str, str]
) -> list[SumRecord]:
    """One (backbone, gold summary) record per document, id-sorted."""
    records = []
    for document_id in sorted(backbones):
        if document_id not in gold:
            raise MissingGold(document_id)
        records.append(
            SumRecord(
                document_id=document_id,
                backbone=backbones[document_id],
                summary=gold[document_id],
            )
        )
    return records


def join_backbone(nuclei: Sequence[str]) -> str:
    """Canonical backbone string: nucleus texts joined by newlines, in order."""
    return "\n".join(nuclei)


def split_records(
    records: Sequence, ratio: float = 0.9, seed: int = 0
) -> tuple[list, list]:
    """Seeded shuffle split into (train, held-out) by ratio."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must be in (0, 1]")
    shuffled = list(records)
    random.Random(seed).shuffle(shuffled)
    cut = round(len(shuffled) * ratio)
    return shuffled[:cut], shuffled[cut:]


# --- JSONL export -----------------------------------------------------------

def _write_jsonl(rows: Iterable[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_distill_jsonl(records: Sequence[DistillRecord], path: str | Path) -> None:
    _write_jsonl(
        (
            {
                "scene_id": r.scene_id,
                "input_text": r.input_text,
                "reasoning_trace": r.reasoning_trace,
                "nuclei": list(r.nuclei),
            }
            for r in records
        ),
        path,
    )


def read_distill_jsonl(path: str | Path) -> list[DistillRecord]:
    return [
        DistillRecord(
            scene_id=row["scene_id"],
            input_text=row["input_text"],
            reasoning_trace=row["reasoning_trace"],
            nuclei=tuple(row["nuclei"]),
        )
        for row in _read_jsonl(path)
    ]


def packed_to_row(example: PackedExample) -> dict:
    return {
        "system": PACKED_SYSTEM_TEXT,
        "instruction": _render_instruction(example.shots),
        "input": example.query_input,
        "output": render_target(*example.target),
    }


def write_packed_jsonl(examples: Sequence[PackedExample], path: str | Path) -> None:
    _write_jsonl((packed_to_row(e) for e in examples), path)


def read_packed_jsonl(path: str | Path) -> list[dict]:
    """Validated packed rows; raises ValueError on a malformed line."""
    rows = _read_jsonl(path)
    for n, row in enumerate(rows, start=1):
        for field_name in ("system", "instruction", "input", "output"):
            if not isinstance(row.get(field_name), str) or not row[field_name].strip():
                raise ValueError(f"line {n}: field {field_name!r} missing or empty")
    return rows


def write_sum_jsonl(records: Sequence[SumRecord], path: str | Path) -> None:
    _write_jsonl(
        (
            {
                "document_id": r.document_id,
                "backbone": r.backbone,
                "summary": r.summary,
            }
            for r in records
        ),
        path,
    )


def read_sum_jsonl(path: str | Path) -> list[SumRecord]:
    return [
        SumRecord(
            document_id=row["document_id"],
            backbone=row["backbone"],
            summary=row["summary"],
        )
        for row in _read_jsonl(path)
    ]
