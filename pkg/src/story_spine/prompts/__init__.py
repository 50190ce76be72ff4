"""Versioned prompt templates with typed slot filling and output parsing.

Templates live as plain-text files with a small front-matter header (id,
output, slots) followed by ---system--- and ---user--- sections. Versions are
content-addressed: the version string is a hash prefix of the file bytes, so
any wording change changes the version. Each template's user text starts with
a "TASK: <id>" line; scripted test backends key their routing on it.

parse_output enforces the machine-checkable output contracts (STOP token,
labeled verdict lines, numbered unit lists, patch blocks, ballots) and raises
ContractViolation when a response lacks the required structure.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping

from ..errors import ContractViolation, MissingSlot, UnknownSlot


class TemplateId(Enum):
    PRONOUN_REPLACEMENT = "pronoun_replacement"
    ENTITY_PROFILE_UPDATE = "entity_profile_update"
    NARRATIVE_UNITS = "narrative_units"
    COUNTERFACTUAL_ANALYSIS = "counterfactual_analysis"
    KERNEL_EVENTS = "kernel_events"
    VOTING_PROTOCOL = "voting_protocol"
    OOD_VERIFICATION = "ood_verification"


class OutputKind(Enum):
    COREFERENCE_CLUSTERS = "coreference_clusters"
    PROFILE_PATCH = "profile_patch"
    UNIT_LIST = "unit_list"
    COHERENCE_VERDICT = "coherence_verdict"
    MICRO_DRAMA = "micro_drama"
    VOTE_BALLOT = "vote_ballot"
    JUDGE_VERDICT = "judge_verdict"


_SLOT_RE = re.compile(r"\{\{(\w+)\}\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: TemplateId
    version: str
    system_text: str
    user_template: str
    slots: tuple[str, ...]
    expected_output: OutputKind


def _parse_template_file(name: str, text: str) -> PromptTemplate:
    header, sep, rest = text.partition("---system---")
    if not sep:
        raise ValueError(f"{name}: missing ---system--- section")
    system_text, sep, user_template = rest.partition("---user---")
    if not sep:
        raise ValueError(f"{name}: missing ---user--- section")

    fields = {}
    for line in header.strip().splitlines():
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    for required in ("id", "output", "slots"):
        if required not in fields:
            raise ValueError(f"{name}: front matter lacks {required!r}")

    slots = tuple(s.strip() for s in fields["slots"].split(",") if s.strip())
    referenced = set(_SLOT_RE.findall(system_text)) | set(_SLOT_RE.findall(user_template))
    if referenced != set(slots):
        raise ValueError(
            f"{name}: declared slots {sorted(slots)} != referenced {sorted(referenced)}"
        )
    return PromptTemplate(
        id=TemplateId(fields["id"]),
        version=hashlib.sha256(text.encode("utf-8")).hexdigest()[:12],
        system_text=system_text.strip(),
        user_template=user_template.strip(),
        slots=slots,
        expected_output=OutputKind(fields["output"]),
    )


def load_templates(directory: str | Path | None = None) -> dict[TemplateId, PromptTemplate]:
    """Load all templates from a directory (default: the packaged set)."""
    templates: dict[TemplateId, PromptTemplate] = {}
    if directory is None:
        root = resources.files(__package__) / "templates"
        names = sorted(p.name for p in root.iterdir() if p.name.endswith(".txt"))
        texts = {n: (root / n).read_text(encoding="utf-8") for n in names}
    else:
        root = Path(directory)
        texts = {
            p.name: p.read_text(encoding="utf-8") for p in sorted(root.glob("*.txt"))
        }
    for name, text in texts.items():
        template = _parse_template_file(name, text)
        if template.id in templates:
            raise ValueError(f"duplicate template id {template.id.value!r} in {name}")
        templates[template.id] = template
    missing = set(TemplateId) - set(templates)
    if missing:
        raise ValueError(f"missing templates: {sorted(t.value for t in missing)}")
    return templates


def render(template: PromptTemplate, slots: Mapping[str, str]) -> tuple[str, str]:
    """Fill placeholders; every declared slot must be bound to non-empty text."""
    for name in slots:
        if name not in template.slots:
            raise UnknownSlot(name)
    for name in template.slots:
        if name not in slots:
            raise MissingSlot(name)
        if not str(slots[name]).strip():
            raise MissingSlot(f"{name} (bound to empty text)")

    def fill(text: str) -> str:
        return _SLOT_RE.sub(lambda m: str(slots[m.group(1)]), text)

    return fill(template.system_text), fill(template.user_template)


# --- typed outputs ----------------------------------------------------------

@dataclass(frozen=True)
class CoreferenceClusters:
    clusters: tuple[tuple[str, tuple[str, ...]], ...]
    rewritten: str


@dataclass(frozen=True)
class ProfilePatch:
    character: str
    added: tuple[tuple[str, str], ...]
    removed: tuple[tuple[str, str], ...]
    cause: tuple[int, int] | None = None  # (scene index, unit index)


@dataclass(frozen=True)
class CoherenceVerdict:
    broken: bool
    notes: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class MicroDrama:
    text: str


@dataclass(frozen=True)
class VoteBallot:
    candidates: tuple[str, ...]
    votes: tuple[int, ...]

    @property
    def winner_index(self) -> int:
        best = max(self.votes)
        return self.votes.index(best)


@dataclass(frozen=True)
class JudgeVerdict:
    positive: bool


def _parse_clusters(raw: str) -> CoreferenceClusters:
    clusters = []
    lines = raw.splitlines()
    rewritten_at = None
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped.startswith("CLUSTER:"):
            body = stripped[len("CLUSTER:"):]
            canonical, sep, mentions = body.partition("=")
            if not sep or not canonical.strip():
                raise ContractViolation(f"malformed CLUSTER line: {stripped!r}")
            clusters.append(
                (
                    canonical.strip(),
                    tuple(m.strip() for m in mentions.split(";") if m.strip()),
                )
            )
        elif stripped == "REWRITTEN:":
            rewritten_at = i
            break
    if rewritten_at is None:
        raise ContractViolation("missing REWRITTEN: section")
    rewritten = "\n".join(lines[rewritten_at + 1:]).strip()
    if not rewritten:
        raise ContractViolation("REWRITTEN: section is empty")
    return CoreferenceClusters(tuple(clusters), rewritten)


_CAUSE_RE = re.compile(r"scene\s*=\s*(\d+)\s+unit\s*=\s*(\d+)")
_PAIR_LINE_RE = re.compile(r"^(ADD|REMOVE):\s*(.+?)\s*=\s*(.+)$")


def _parse_patches(raw: str) -> tuple[ProfilePatch, ...]:
    lines = [l.strip() for l in raw.splitlines() if l.strip()]
    if any(l == "NO CHANGES" for l in lines):
        return ()
    patches = []
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line.startswith("PROFILE:"):
            raise ContractViolation(f"expected PROFILE: block, got {line!r}")
        character = line[len("PROFILE:"):].strip()
        if not character:
            raise ContractViolation("PROFILE: line names no character")
        added, removed, cause = [], [], None
        i += 1
        while i < len(lines) and lines[i] != "END":
            match = _PAIR_LINE_RE.match(lines[i])
            if match:
                target = added if match.group(1) == "ADD" else removed
                target.append((match.group(2).strip(), match.group(3).strip()))
            elif lines[i].startswith("CAUSE:"):
                found = _CAUSE_RE.search(lines[i])
                if not found:
                    raise ContractViolation(f"malformed CAUSE line: {lines[i]!r}")
                cause = (int(found.group(1)), int(found.group(2)))
            else:
                raise ContractViolation(f"unexpected line in patch block: {lines[i]!r}")
            i += 1
        if i >= len(lines):
            raise ContractViolation(f"patch block for {character!r} lacks END")
        i += 1
        patches.append(ProfilePatch(character, tuple(added), tuple(removed), cause))
    if not patches:
        raise ContractViolation("no patch blocks and no NO CHANGES line")
    return tuple(patches)


_NUMBERED_RE = re.compile(r"^(\d+)[.)]\s+(.*\S)\s*$")


def _parse_units(raw: str) -> tuple[str, ...]:
    units = []
    for line in raw.splitlines():
        match = _NUMBERED_RE.match(line.strip())
        if match:
            number, text = int(match.group(1)), match.group(2)
            if number != len(units) + 1:
                raise ContractViolation(
                    f"unit numbering jumps to {number} at position {len(units) + 1}"
                )
            units.append(text)
    if not units:
        raise ContractViolation("no numbered unit lines found")
    return tuple(units)


def _parse_coherence(raw: str) -> CoherenceVerdict:
    notes = []
    verdict = None
    for line in raw.splitlines():
        stripped = line.strip()
        if stripped.startswith("VERDICT:"):
            value = stripped[len("VERDICT:"):].strip().upper()
            if value not in ("BROKEN", "CONTINUOUS"):
                raise ContractViolation(f"verdict must be BROKEN or CONTINUOUS, got {value!r}")
            verdict = value == "BROKEN"
        elif ":" in stripped and stripped:
            name, _, note = stripped.partition(":")
            if name.strip():
                notes.append((name.strip(), note.strip()))
    if verdict is None:
        raise ContractViolation("missing VERDICT line")
    return CoherenceVerdict(broken=verdict, notes=tuple(notes))


def _parse_micro_drama(raw: str) -> MicroDrama:
    lines = raw.rstrip().splitlines()
    if not lines or lines[-1].strip() != "STOP":
        raise ContractViolation("output does not end with STOP token")
    return MicroDrama("\n".join(lines[:-1]).strip())


_CANDIDATE_RE = re.compile(r"^CANDIDATE\s+(\d+):\s*(.*)$")
_VOTES_RE = re.compile(r"^VOTES:\s*(\d+)$")


def _parse_ballot(raw: str) -> VoteBallot:
    candidates, votes = [], []
    pending = None
    for line in raw.splitlines():
        stripped = line.strip()
        cand = _CANDIDATE_RE.match(stripped)
        vote = _VOTES_RE.match(stripped)
        if cand:
            if pending is not None:
                raise ContractViolation(f"candidate {pending} has no VOTES line")
            pending = int(cand.group(1))
            if pending != len(candidates) + 1:
                raise ContractViolation(f"candidate numbering jumps to {pending}")
            candidates.append(cand.group(2).strip())
        elif vote:
            if pending is None:
                raise ContractViolation("VOTES line without a preceding CANDIDATE")
            votes.append(int(vote.group(1)))
            pending = None
    if pending is not None:
        raise ContractViolation(f"candidate {pending} has no VOTES line")
    if not candidates:
        raise ContractViolation("ballot lists no candidates")
    return VoteBallot(tuple(candidates), tuple(votes))


def _parse_judge(raw: str) -> JudgeVerdict:
    for line in raw.splitlines():
        stripped = line.strip()
        if stripped.startswith("VERDICT:"):
            value = stripped[len("VERDICT:"):].strip().upper()
            if value in ("POSITIVE", "NEGATIVE"):
                return JudgeVerdict(positive=value == "POSITIVE")
            raise ContractViolation(f"verdict must be POSITIVE or NEGATIVE, got {value!r}")
    raise ContractViolation("missing VERDICT line")


_PARSERS = {
    OutputKind.COREFERENCE_CLUSTERS: _parse_clusters,
    OutputKind.PROFILE_PATCH: _parse_patches,
    OutputKind.UNIT_LIST: _parse_units,
    OutputKind.COHERENCE_VERDICT: _parse_coherence,
    OutputKind.MICRO_DRAMA: _parse_micro_drama,
    OutputKind.VOTE_BALLOT: _parse_ballot,
    OutputKind.JUDGE_VERDICT: _parse_judge,
}

_OUTPUT_OF = {
    TemplateId.PRONOUN_REPLACEMENT: OutputKind.COREFERENCE_CLUSTERS,
    TemplateId.ENTITY_PROFILE_UPDATE: OutputKind.PROFILE_PATCH,
    TemplateId.NARRATIVE_UNITS: OutputKind.UNIT_LIST,
    TemplateId.COUNTERFACTUAL_ANALYSIS: OutputKind.COHERENCE_VERDICT,
    TemplateId.KERNEL_EVENTS: OutputKind.MICRO_DRAMA,
    TemplateId.VOTING_PROTOCOL: OutputKind.VOTE_BALLOT,
    TemplateId.OOD_VERIFICATION: OutputKind.JUDGE_VERDICT,
}


def parse_output(template_id: TemplateId, raw: str):
    """Parse a response per the template's output contract."""
    if not raw or not raw.strip():
        raise ContractViolation("empty response")
    return _PARSERS[_OUTPUT_OF[template_id]](raw)
