"""Evaluation harness: ROUGE, compression, judge protocols, and stats.

ROUGE here is the F1-reporting variant over lowercase, punctuation-stripped
whitespace tokens, no stemming unless the flag is set; the variant matters
for cross-run comparability, so it is fixed and documented rather than
configurable per call. Compression is the retained token fraction of the
source, reported as a percentage (lower = more compressed).

The judge protocols treat refusals as data: a declined response counts in
the "rejected" column, never as an error. Judge score averages are the
arithmetic mean of per-judge percentage rows.
"""

from __future__ import annotations

import csv
import logging
import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .backend import Backend, ChatRequest
from .errors import (
    BackendError,
    ContractViolation,
    EmptyReference,
    EmptySource,
)
from .ingest import Screenplay, scene_text
from .prompts import TemplateId, load_templates, parse_output, render
from .tokens import count_whitespace_tokens

logger = logging.getLogger(__name__)

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _light_stem(token: str) -> str:
    for suffix in ("ing", "ed", "es", "s"):
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: -len(suffix)]
    return token


def rouge_tokenize(text: str, stem: bool = False) -> list[str]:
    tokens = [t.translate(_PUNCT_TABLE) for t in text.lower().split()]
    tokens = [t for t in tokens if t]
    if stem:
        tokens = [_light_stem(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    def __post_init__(self):
        for value in (self.precision, self.recall, self.f1):
            if not 0.0 <= value <= 1.0:
                raise ValueError("ROUGE components must lie in [0, 1]")


def _score(match: float, candidate_total: int, reference_total: int) -> RougeScore:
    precision = match / candidate_total if candidate_total else 0.0
    recall = match / reference_total if reference_total else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return RougeScore(precision, recall, f1)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int, stem: bool = False) -> RougeScore:
    """Clipped n-gram overlap P/R/F1 for n in {1, 2}."""
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    reference_tokens = rouge_tokenize(reference, stem)
    if not reference_tokens:
        raise EmptyReference("reference has no tokens")
    candidate_tokens = rouge_tokenize(candidate, stem)
    candidate_grams = _ngrams(candidate_tokens, n)
    reference_grams = _ngrams(reference_tokens, n)
    match = sum((candidate_grams & reference_grams).values())
    return _score(match, sum(candidate_grams.values()), sum(reference_grams.values()))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        row = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = max(prev[j], row[j - 1])
        prev = row
    return prev[len(b)]


def rouge_l(candidate: str, reference: str, stem: bool = False) -> RougeScore:
    """Longest-common-subsequence P/R/F1 over tokens."""
    reference_tokens = rouge_tokenize(reference, stem)
    if not reference_tokens:
        raise EmptyReference("reference has no tokens")
    candidate_tokens = rouge_tokenize(candidate, stem)
    lcs = _lcs_length(candidate_tokens, reference_tokens)
    return _score(lcs, len(candidate_tokens), len(reference_tokens))


def compression_ratio(
    backbone: str,
    source: str,
    counter: Callable[[str], int] = count_whitespace_tokens,
) -> float:
    """Retained token share of the source, as a percentage."""
    source_tokens = counter(source)
    if source_tokens == 0:
        raise EmptySource("source has no tokens")
    return counter(backbone) * 100.0 / source_tokens


# --- LLM-as-judge protocols --------------------------------------------------

@dataclass(frozen=True)
class JudgeTally:
    positive: int = 0
    negative: int = 0
    rejected: int = 0

    def __post_init__(self):
        if min(self.positive, self.negative, self.rejected) < 0:
            raise ValueError("tally counts must be non-negative")

    @property
    def total(self) -> int:
        return self.positive + self.negative + self.rejected

    @property
    def percentages(self) -> tuple[float, float, float]:
        if self.total == 0:
            return (0.0, 0.0, 0.0)
        return (
            round(self.positive * 100.0 / self.total, 2),
            round(self.negative * 100.0 / self.total, 2),
            round(self.rejected * 100.0 / self.total, 2),
        )


def average_rows(rows: Sequence[tuple[float, float, float]]) -> tuple[float, float, float]:
    """Arithmetic mean of per-judge percentage rows, two-decimal rounded."""
    if not rows:
        raise ValueError("no rows to average")
    count = len(rows)
    return (
        round(sum(r[0] for r in rows) / count, 2),
        round(sum(r[1] for r in rows) / count, 2),
        round(sum(r[2] for r in rows) / count, 2),
    )


@dataclass(frozen=True)
class OodReport:
    rows: tuple[tuple[str, JudgeTally], ...]
    warnings: tuple[str, ...] = ()

    @property
    def average(self) -> tuple[float, float, float]:
        return average_rows([tally.percentages for _, tally in self.rows])

    def to_dict(self) -> dict:
        return {
            "judges": [
                {
                    "name": name,
                    "positive": tally.positive,
                    "negative": tally.negative,
                    "rejected": tally.rejected,
                    "percentages": list(tally.percentages),
                }
                for name, tally in self.rows
            ],
            "average": list(self.average),
            "warnings": list(self.warnings),
        }


def judge_ood(
    nuclei_sets: Sequence[str],
    judge_backends: Mapping[str, Backend],
    model: str = "judge",
    templates=None,
) -> OodReport:
    """Judge every nucleus set with every backend; refusals count as rejected.

    A judge whose calls fail with a backend error is recorded in the warnings
    and dropped from the rows. Responses that carry no parseable verdict also
    count as rejected (the judge declined to answer the question asked).
    """
    if not judge_backends:
        raise ValueError("at least one judge backend is required")
    templates = templates or load_templates()
    template = templates[TemplateId.OOD_VERIFICATION]
    rows = []
    warnings = []
    for name in judge_backends:
        backend = judge_backends[name]
        positive = negative = rejected = 0
        try:
            for nuclei_text in nuclei_sets:
                system, user = render(template, {"nuclei_text": nuclei_text})
                response = backend.complete(
                    ChatRequest(model=model, system=system, user=user)
                )
                if response.refused:
                    rejected += 1
                    continue
                try:
                    verdict = parse_output(TemplateId.OOD_VERIFICATION, response.text)
                except ContractViolation:
                    rejected += 1
                    continue
                if verdict.positive:
                    positive += 1
                else:
                    negative += 1
        except BackendError as err:
            warnings.append(f"judge {name!r} skipped: {err}")
            logger.warning("judge %r skipped: %s", name, err)
            continue
        rows.append((name, JudgeTally(positive, negative, rejected)))
    return OodReport(tuple(rows), tuple(warnings))


# --- rubric and dimension scoring --------------------------------------------

RUBRIC_DIMENSIONS: tuple[tuple[str, dict[int, str]], ...] = (
    (
        "Indispensability (Mainline Necessity)",
        {
            1: "irrelevant to main plot",
            2: "partly related, missing causal links",
            3: "mostly covers plot, minor gaps",
            4: "complete and logical",
            5: "precise and non-redundant",
        },
    ),
    (
        "Coherence",
        {
            1: "fragmented",
            2: "weak logic, disjoint",
            3: "generally coherent",
            4: "smooth and consistent",
            5: "fully coherent and well-structured",
        },
    ),
    (
        "Character Consistency",
        {
            1: "irrational or contradictory",
            2: "partly consistent, major jumps",
            3: "mostly consistent",
            4: "logical overall",
            5: "fully consistent with growth",
        },
    ),
    (
        "Satellite Reduction",
        {
            1: "mostly redundant satellites",
            2: "over 50% satellites",
            3: "30-40% satellites",
            4: "10-20% satellites",
            5: "nearly none, pure mainline",
        },
    ),
)


@dataclass(frozen=True)
class DimensionScores:
    indispensability: float
    coherence: float
    character_consistency: float
    satellite_reduction: float

    def __post_init__(self):
        for value in (
            self.indispensability,
            self.coherence,
            self.character_consistency,
            self.satellite_reduction,
        ):
            if not 1.0 <= value <= 5.0:
                raise ValueError("dimension scores must lie in [1, 5]")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (
            self.indispensability,
            self.coherence,
            self.character_consistency,
            self.satellite_reduction,
        )


def export_rubric() -> str:
    """The annotation sheet: four dimensions, five anchors each."""
    lines = [
        "NARRATIVE BACKBONE ANNOTATION SHEET",
        "Rate the backbone on each dimension; write the score after SCORE:.",
        "",
    ]
    for name, anchors in RUBRIC_DIMENSIONS:
        lines.append(f"DIMENSION: {name}")
        for score in sorted(anchors):
            lines.append(f"  {score} = {anchors[score]}")
        lines.append("SCORE: _")
        lines.append("")
    return "\n".join(lines)


_SHEET_DIMENSION_RE = re.compile(r"^DIMENSION:\s*(.+)$")
_SHEET_ANCHOR_RE = re.compile(r"^\s*([1-5])\s*=\s*(.+)$")
_SHEET_SCORE_RE = re.compile(r"^SCORE:\s*(.+)$")


def parse_annotation(sheet: str) -> tuple[dict[str, dict[int, str]], dict[str, float | None]]:
    """Read a rubric sheet back: (anchors per dimension, scores per dimension).

    Unfilled scores (the "_" placeholder) come back as None. The exported
    sheet round-trips: anchors parse to exactly the rubric table.
    """
    anchors: dict[str, dict[int, str]] = {}
    scores: dict[str, float | None] = {}
    current: str | None = None
    for line in sheet.splitlines():
        dim = _SHEET_DIMENSION_RE.match(line.strip())
        if dim:
            current = dim.group(1).strip()
            anchors[current] = {}
            scores[current] = None
            continue
        if current is None:
            continue
        anchor = _SHEET_ANCHOR_RE.match(line)
        if anchor:
            anchors[current][int(anchor.group(1))] = anchor.group(2).strip()
            continue
        filled = _SHEET_SCORE_RE.match(line.strip())
        if filled:
            raw = filled.group(1).strip()
            if raw and raw != "_":
                try:
                    scores[current] = float(raw)
                except ValueError as err:
                    raise ContractViolation(f"unreadable score {raw!r}") from err
    if not anchors:
        raise ContractViolation("sheet contains no DIMENSION sections")
    return anchors, scores


_FOUR_SCORES_RE = re.compile(
    r"(\d+(?:\.\d+)?)\s*/\s*(\d+(?:\.\d+)?)\s*/\s*(\d+(?:\.\d+)?)\s*/\s*(\d+(?:\.\d+)?)"
)

_DIMENSION_JUDGE_SYSTEM = (
    "You are a trained narrative-theory annotator. Score the distilled plot"
    " backbone on the four rubric dimensions, each on the 1-5 anchor scale."
)


def parse_dimension_verdict(raw: str) -> DimensionScores:
    """Four slash-separated scores, in rubric order."""
    match = _FOUR_SCORES_RE.search(raw)
    if not match:
        raise ContractViolation("verdict carries no four-score line")
    values = [float(g) for g in match.groups()]
    for value in values:
        if not 1.0 <= value <= 5.0:
            raise ContractViolation(f"score {value} outside the 1-5 anchor range")
    return DimensionScores(*values)


def judge_dimensions(
    backbone: str, judge_backend: Backend, model: str = "judge"
) -> DimensionScores:
    """Rubric-anchored judge scores for one backbone."""
    if not backbone.strip():
        raise ValueError("backbone must be non-empty")
    user = (
        "TASK: dimension_scores\n\n"
        f"{export_rubric()}\n"
        "BACKBONE:\n"
        f"{backbone}\n\n"
        "Reply with one line in exactly this format:\n"
        "SCORES: <indispensability> / <coherence> / <character consistency>"
        " / <satellite reduction>"
    )
    response = judge_backend.complete(
        ChatRequest(model=model, system=_DIMENSION_JUDGE_SYSTEM, user=user)
    )
    if response.refused:
        raise ContractViolation("dimension judge refused to answer")
    return parse_dimension_verdict(response.text)


# --- distribution statistics --------------------------------------------------

def _log(value: int, base: float | None) -> float | None:
    """Natural log by default; None marks an absent (zero-count) value."""
    if value <= 0:
        return None
    return math.log(value) if base is None else math.log(value, base)


def scene_length_stats(
    screenplay: Screenplay,
    nuclei_per_scene: Mapping[int, Sequence[str]],
    counter: Callable[[str], int] = count_whitespace_tokens,
    log_base: float | None = None,
) -> list[tuple[int, float | None, float | None]]:
    """Per scene: (index, log source tokens, log nuclei tokens)."""
    rows = []
    for scene in screenplay.scenes:
        source_tokens = counter(scene_text(scene))
        nuclei = nuclei_per_scene.get(scene.index, ())
        nuclei_tokens = counter(" ".join(nuclei)) if nuclei else 0
        rows.append(
            (scene.index, _log(source_tokens, log_base), _log(nuclei_tokens, log_base))
        )
    return rows


def chapter_share_stats(
    screenplay: Screenplay,
    nuclei_per_scene: Mapping[int, Sequence[str]],
    counter: Callable[[str], int] = count_whitespace_tokens,
) -> list[tuple[str, float, float]]:
    """Per chapter: (label, source token share %, nuclei token share %).

    Shares are fractions of the per-column totals, so each column sums to
    100% up to float rounding; a zero column stays all-zero.
    """
    labels, source_counts, nuclei_counts = [], [], []
    for scene in screenplay.scenes:
        labels.append(scene.heading or f"chapter {scene.index}")
        source_counts.append(counter(scene_text(scene)))
        nuclei = nuclei_per_scene.get(scene.index, ())
        nuclei_counts.append(counter(" ".join(nuclei)) if nuclei else 0)
    source_total = sum(source_counts)
    nuclei_total = sum(nuclei_counts)
    rows = []
    for label, source_count, nuclei_count in zip(labels, source_counts, nuclei_counts):
        source_share = source_count * 100.0 / source_total if source_total else 0.0
        nuclei_share = nuclei_count * 100.0 / nuclei_total if nuclei_total else 0.0
        rows.append((label, source_share, nuclei_share))
    return rows


def write_scene_stats_csv(
    rows: Sequence[tuple[int, float | None, float | None]], path: str | Path
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene_index", "log_source_tokens", "log_nuclei_tokens"])
        for index, log_source, log_nuclei in rows:
            writer.writerow(
                [
                    index,
                    "" if log_source is None else f"{log_source:.6f}",
                    "" if log_nuclei is None else f"{log_nuclei:.6f}",
                ]
            )


def write_chapter_share_csv(
    rows: Sequence[tuple[str, float, float]], path: str | Path
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chapter", "source_share_pct", "nuclei_share_pct"])
        for label, source_share, nuclei_share in rows:
            writer.writerow([label, f"{source_share:.4f}", f"{nuclei_share:.4f}"])
