"""Scene-by-scene narrative-backbone extraction.

Per scene, the agent: (1) rewrites the text so every sentence reads
independently (coreference resolved to canonical names), (2) segments it into
sentence units, (3) patches character profiles and records the induced state
transitions, (4) asks, for every unit, whether deleting it would break some
character trajectory, repeating the question over rotating worked examples
and settling disagreements by per-unit majority, and (5) composes the kernel
text from the units voted nucleus. Sampling stays at temperature 0.0
throughout; vote diversity comes only from the exemplar rotation.

A rolling memory (character profiles, dependency log, backbone so far) is
threaded scene to scene; scenes are strictly sequential. Every scene writes a
resumable JSON checkpoint, so an interrupted run continues where it stopped
and, with a response cache, reproduces the uninterrupted output byte for
byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .backend import Backend, ChatRequest
from .errors import (
    BackendError,
    ContractViolation,
    EmptyCandidates,
    InvalidDelta,
    PipelineAborted,
)
from .ingest import Scene, Screenplay, scene_text
from .prompts import (
    PromptTemplate,
    TemplateId,
    load_templates,
    parse_output,
    render,
)
from .tokens import make_estimator
from .world import (
    AttributeSet,
    Character,
    Delta,
    Event,
    NarrativeWorld,
    StateTransition,
    apply_delta,
    world_from_dict,
    world_to_dict,
)

NO_PROFILE_SENTINEL = "(no profile context)"
PROFILE_SECTION_HEADER = "CHARACTER PROFILES:"

# Worked examples rotated across voting attempts. Temperature stays 0.0, so
# the exemplar is the only source of variation between attempts.
EXEMPLARS: tuple[str, ...] = (
    (
        "Unit under test: \"Mara steals the ledger from the magistrate's office.\"\n"
        "Two scenes later Mara is arrested for the theft and loses her clerk post.\n"
        "KEY INFORMATION: the theft is the only setup for the arrest\n"
        "CAUSAL CHAIN: the arrest dangles without the theft\n"
        "CHARACTER CONTINUITY: Mara losing her post becomes unexplained\n"
        "PLOT CLARITY: the trial is unreadable without the charge\n"
        "TEMPORAL ORDER: unaffected\n"
        "VERDICT: BROKEN"
    ),
    (
        "Unit under test: \"Rain drums on the tavern roof while the travelers eat.\"\n"
        "No later unit refers to the rain or to the meal.\n"
        "KEY INFORMATION: atmospheric only\n"
        "CAUSAL CHAIN: no event depends on it\n"
        "CHARACTER CONTINUITY: no attribute gained or lost\n"
        "PLOT CLARITY: the story reads identically without it\n"
        "TEMPORAL ORDER: unaffected\n"
        "VERDICT: CONTINUOUS"
    ),
    (
        "Unit under test: \"Edwin leaves York and settles in London.\"\n"
        "Later units show Edwin trading in London with no other explanation of the move.\n"
        "KEY INFORMATION: establishes the new location\n"
        "CAUSAL CHAIN: the London dealings presuppose the move\n"
        "CHARACTER CONTINUITY: location changes from York to London here and only here\n"
        "PLOT CLARITY: later scenes contradict the old location without it\n"
        "TEMPORAL ORDER: unaffected\n"
        "VERDICT: BROKEN"
    ),
)


class UnitLabel(Enum):
    NUCLEUS = "nucleus"
    SATELLITE = "satellite"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class NaturalizedScene:
    scene_index: int
    sentences: tuple[str, ...]
    clusters: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self):
        if any(not s.strip() for s in self.sentences):
            raise ValueError("naturalized sentences must be non-empty")


@dataclass(frozen=True)
class NarrativeUnit:
    scene_index: int
    unit_index: int
    text: str
    label: UnitLabel = UnitLabel.UNLABELED
    rationale: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("unit text must be non-empty")
        if self.label is not UnitLabel.UNLABELED and not self.rationale.strip():
            raise ValueError("labeled units must carry a rationale")


@dataclass(frozen=True)
class RollingMemory:
    """Cross-scene state: the world plus the backbone extracted so far.

    Profiles and the dependency log are views over the world, which keeps
    them consistent with character histories by construction.
    """

    step: int = 0
    world: NarrativeWorld = field(default_factory=NarrativeWorld)
    backbone: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def profiles(self) -> dict[str, AttributeSet]:
        return {
            cid: c.current
            for cid, c in self.world.characters.items()
            if c.current is not None
        }

    @property
    def dependency_log(self) -> tuple[tuple[StateTransition, str], ...]:
        return tuple(
            (t, t.inducing_event)
            for t in self.world.transitions
            if t.inducing_event is not None
        )


@dataclass(frozen=True)
class SceneResult:
    naturalized: NaturalizedScene
    units: tuple[NarrativeUnit, ...]
    kernel_text: str
    trace: str
    memory_after: RollingMemory
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if any(u.label is not UnitLabel.UNLABELED for u in self.units) and not self.trace.strip():
            raise ValueError("trace must be non-empty once units are labeled")

    @property
    def nucleus_texts(self) -> tuple[str, ...]:
        return tuple(u.text for u in self.units if u.label is UnitLabel.NUCLEUS)


@dataclass(frozen=True)
class PipelineResult:
    backbone: tuple[str, ...]
    scenes: tuple[SceneResult, ...]


@dataclass(frozen=True)
class PipelineConfig:
    model: str = "mock"
    vote_attempts: int = 3
    input_budget: int = 32768
    output_budget: int = 1024
    no_trajectory_profiling: bool = False
    prompt_dir: str | None = None
    chars_per_token: float = 4.0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.vote_attempts < 1:
            raise ValueError("vote_attempts must be >= 1")
        if self.input_budget <= 0 or self.output_budget <= 0:
            raise ValueError("token budgets must be positive")


def config_fingerprint(config: PipelineConfig) -> str:
    payload = json.dumps(
        {
            "model": config.model,
            "vote_attempts": config.vote_attempts,
            "input_budget": config.input_budget,
            "output_budget": config.output_budget,
            "no_trajectory_profiling": config.no_trajectory_profiling,
            "chars_per_token": config.chars_per_token,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def vote(candidate_sets: Sequence[Iterable[int]], backend: Backend | None = None) -> frozenset[int]:
    """Per-unit majority over candidate nucleus sets.

    A unit is a nucleus when at least half the attempts call it one; with an
    odd attempt count that is a strict majority and no ties arise. The tied
    case at even counts resolves to nucleus: a missed nucleus breaks
    downstream continuity, a spurious one only costs compression.
    """
    sets = [frozenset(s) for s in candidate_sets]
    if not sets:
        raise EmptyCandidates("no candidate sets to vote over")
    attempts = len(sets)
    universe = frozenset().union(*sets) if sets else frozenset()
    return frozenset(
        unit for unit in universe if 2 * sum(unit in s for s in sets) >= attempts
    )


# --- slot formatting --------------------------------------------------------

def _slug(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")
    return slug or "character"


def format_profiles(memory: RollingMemory) -> str:
    profiles = memory.profiles
    if not profiles:
        return "(no profiles yet)"
    lines = []
    for cid in sorted(profiles, key=lambda c: memory.world.characters[c].canonical_name):
        character = memory.world.characters[cid]
        state = profiles[cid]
        if state.entries:
            attrs = "; ".join(f"{k} = {v}" for k, v in sorted(state.entries.items()))
        else:
            attrs = "(no attributes yet)"
        lines.append(f"{character.canonical_name}: {attrs}")
    return "\n".join(lines)


def format_known_characters(memory: RollingMemory) -> str:
    characters = memory.world.characters
    if not characters:
        return "(none known yet)"
    lines = []
    for cid in sorted(characters, key=lambda c: characters[c].canonical_name):
        character = characters[cid]
        aliases = "; ".join(sorted(character.aliases))
        lines.append(f"{character.canonical_name} = {aliases}")
    return "\n".join(lines)


def format_units(sentences: Sequence[str], start: int = 0) -> str:
    return "\n".join(f"unit={start + i}: {text}" for i, text in enumerate(sentences))


def format_backbone(memory: RollingMemory) -> str:
    if not memory.backbone:
        return "(empty)"
    return "\n".join(f"- {text}" for text in memory.backbone)


_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


class NEAgent:
    """The per-document extraction agent; one instance per run."""

    def __init__(
        self,
        backend: Backend,
        config: PipelineConfig | None = None,
        templates: Mapping[TemplateId, PromptTemplate] | None = None,
    ):
        self.backend = backend
        self.config = config or PipelineConfig()
        self.templates = dict(templates) if templates else load_templates(self.config.prompt_dir)
        self._estimate = make_estimator(self.config.chars_per_token)

    # -- plumbing ------------------------------------------------------

    def _ask(self, template_id: TemplateId, slots: Mapping[str, str]):
        template = self.templates[template_id]
        system, user = render(template, slots)
        request = ChatRequest(
            model=self.config.model,
            system=system,
            user=user,
            temperature=0.0,
            max_output_tokens=self.config.output_budget,
        )
        response = self.backend.complete(request)
        if response.refused:
            raise ContractViolation(
                f"backend refused a {template_id.value} request; cannot proceed"
            )
        return parse_output(template_id, response.text)

    def _prompt_cap(self) -> int:
        # room left for scene content after template text and fixed slots
        return max(256, self.config.input_budget - 1024)

    def _chunk_text(self, text: str) -> list[str]:
        cap = self._prompt_cap()
        if self._estimate(text) <= cap:
            return [text]
        pieces = _SENTENCE_SPLIT_RE.split(text)
        chunks: list[str] = []
        current = ""
        for piece in pieces:
            if not piece:
                continue
            candidate = f"{current} {piece}".strip()
            if current and self._estimate(candidate) > cap:
                chunks.append(current)
                current = piece
            else:
                current = candidate
            while self._estimate(current) > cap:  # single oversized sentence
                cut = int(cap * self.config.chars_per_token)
                chunks.append(current[:cut])
                current = current[cut:].strip()
        if current:
            chunks.append(current)
        return [c for c in chunks if c.strip()]

    def _chunk_sentences(self, sentences: Sequence[str], start: int = 0) -> list[tuple[int, list[str]]]:
        """Consecutive (start_index, sentences) groups fitting the prompt cap."""
        cap = self._prompt_cap()
        groups: list[tuple[int, list[str]]] = []
        current: list[str] = []
        current_start = start
        for offset, sentence in enumerate(sentences):
            candidate = current + [sentence]
            if current and self._estimate(format_units(candidate, current_start)) > cap:
                groups.append((current_start, current))
                current_start = start + offset
                current = [sentence]
            else:
                current = candidate
        if current:
            groups.append((current_start, current))
        return groups

    # -- agent steps ---------------------------------------------------

    def naturalize(self, scene: Scene, memory: RollingMemory) -> NaturalizedScene:
        """Coreference-resolved, sentence-segmented scene text."""
        if memory.step != scene.index:
            raise ValueError(
                f"memory is at step {memory.step}, scene has index {scene.index}"
            )
        if not scene.elements:
            return NaturalizedScene(scene.index, ())
        known = format_known_characters(memory)
        clusters: list[tuple[str, tuple[str, ...]]] = []
        sentences: list[str] = []
        for chunk in self._chunk_text(scene_text(scene)):
            resolved = self._ask(
                TemplateId.PRONOUN_REPLACEMENT,
                {"scene_text": chunk, "known_characters": known},
            )
            clusters.extend(resolved.clusters)
            for part in self._chunk_text(resolved.rewritten):
                units = self._ask(TemplateId.NARRATIVE_UNITS, {"rewritten_text": part})
                sentences.extend(units)
        return NaturalizedScene(scene.index, tuple(sentences), tuple(clusters))

    def update_profiles(
        self, memory: RollingMemory, naturalized: NaturalizedScene
    ) -> RollingMemory:
        """Advance memory one step, applying profile patches as transitions."""
        if naturalized.scene_index != memory.step:
            raise ValueError(
                f"memory is at step {memory.step}, naturalized scene is"
                f" {naturalized.scene_index}"
            )
        warnings: list[str] = []
        world = memory.world
        for canonical, mentions in naturalized.clusters:
            world = _ensure_character(world, canonical, mentions)

        patches = []
        if naturalized.sentences:
            profiles_slot = format_profiles(memory)
            for start, group in self._chunk_sentences(naturalized.sentences):
                parsed = self._ask(
                    TemplateId.ENTITY_PROFILE_UPDATE,
                    {
                        "profiles": profiles_slot,
                        "scene_sentences": (
                            f"scene={naturalized.scene_index}\n"
                            + format_units(group, start)
                        ),
                    },
                )
                patches.extend(parsed)

        scene_index = naturalized.scene_index
        for name, added, removed, cause in _merge_patches(patches):
            world, warning = _apply_patch(
                world, scene_index, name, added, removed, cause, naturalized
            )
            if warning:
                warnings.append(warning)
        return RollingMemory(
            step=memory.step + 1,
            world=world,
            backbone=memory.backbone,
            warnings=memory.warnings + tuple(warnings),
        )

    def classify_units(
        self,
        naturalized: NaturalizedScene,
        memory: RollingMemory,
        ablation: bool | None = None,
    ) -> list[NarrativeUnit]:
        """Label every unit nucleus/satellite by counterfactual majority."""
        no_profiles = (
            self.config.no_trajectory_profiling if ablation is None else ablation
        )
        sentences = naturalized.sentences
        if not sentences:
            return []
        scene_index = naturalized.scene_index
        if no_profiles:
            profile_section = NO_PROFILE_SENTINEL
        else:
            profile_section = f"{PROFILE_SECTION_HEADER}\n{format_profiles(memory)}"
        backbone_slot = format_backbone(memory)

        attempts = self.config.vote_attempts
        candidate_sets: list[frozenset[int]] = []
        rationales: list[dict[int, str]] = []
        for attempt in range(attempts):
            exemplar = EXEMPLARS[attempt % len(EXEMPLARS)]
            chosen: set[int] = set()
            notes: dict[int, str] = {}
            for i, sentence in enumerate(sentences):
                slots = {
                    "unit_marker": f"UNIT scene={scene_index} index={i}",
                    "unit_text": sentence,
                    "scene_units": self._unit_context(sentences, i),
                    "backbone": backbone_slot,
                    "profile_section": profile_section,
                    "exemplar": exemplar,
                }
                verdict = self._ask(TemplateId.COUNTERFACTUAL_ANALYSIS, slots)
                if verdict.broken:
                    chosen.add(i)
                notes[i] = "; ".join(f"{k}: {v}" for k, v in verdict.notes) or "(no notes)"
            candidate_sets.append(frozenset(chosen))
            rationales.append(notes)

        final = vote(candidate_sets, self.backend)
        units = []
        for i, sentence in enumerate(sentences):
            label = UnitLabel.NUCLEUS if i in final else UnitLabel.SATELLITE
            rationale = next(
                (
                    rationales[a][i]
                    for a in range(attempts)
                    if (i in candidate_sets[a]) == (i in final)
                ),
                rationales[0][i],
            )
            units.append(
                NarrativeUnit(scene_index, i, sentence, label, rationale)
            )
        return units

    def _unit_context(self, sentences: Sequence[str], center: int) -> str:
        """Scene units shown to the counterfactual prompt, shrunk to budget."""
        cap = self._prompt_cap()
        window = len(sentences)
        while window > 0:
            lo = max(0, center - window)
            hi = min(len(sentences), center + window + 1)
            text = format_units(sentences[lo:hi], lo)
            if self._estimate(text) <= cap:
                return text
            window //= 2
        return format_units([sentences[center]], center)

    def extract_kernel(self, units: Sequence[NarrativeUnit]) -> str:
        """Micro-drama text composed from nucleus units; empty when none."""
        nuclei = [u for u in units if u.label is UnitLabel.NUCLEUS]
        if not nuclei:
            return ""
        listing = "\n".join(
            f"{n}. {unit.text}" for n, unit in enumerate(nuclei, start=1)
        )
        drama = self._ask(TemplateId.KERNEL_EVENTS, {"nucleus_units": listing})
        return drama.text

    # -- per-scene and whole-run orchestration --------------------------

    def process_scene(
        self, scene: Scene, memory: RollingMemory
    ) -> tuple[SceneResult, RollingMemory]:
        naturalized = self.naturalize(scene, memory)
        advanced = self.update_profiles(memory, naturalized)
        units = tuple(self.classify_units(naturalized, advanced))
        kernel = self.extract_kernel(units)
        nucleus_texts = tuple(u.text for u in units if u.label is UnitLabel.NUCLEUS)
        memory_after = replace(advanced, backbone=advanced.backbone + nucleus_texts)
        new_warnings = advanced.warnings[len(memory.warnings):]
        trace = _build_trace(scene.index, memory, advanced, units)
        result = SceneResult(
            naturalized=naturalized,
            units=units,
            kernel_text=kernel,
            trace=trace,
            memory_after=memory_after,
            warnings=new_warnings,
        )
        return result, memory_after

    def run(self, screenplay: Screenplay) -> PipelineResult:
        fingerprint = config_fingerprint(self.config)
        ckpt_dir = (
            Path(self.config.checkpoint_dir) if self.config.checkpoint_dir else None
        )
        if ckpt_dir:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
        memory = RollingMemory()
        results: list[SceneResult] = []
        for scene in screenplay.scenes:
            ckpt_path = ckpt_dir / f"scene_{scene.index:04d}.json" if ckpt_dir else None
            if ckpt_path and ckpt_path.exists():
                loaded = _load_checkpoint(ckpt_path, fingerprint, scene.index)
                if loaded is not None:
                    result, memory = loaded
                    results.append(result)
                    continue
            try:
                result, memory = self.process_scene(scene, memory)
            except (BackendError, ContractViolation) as err:
                raise PipelineAborted(
                    f"scene {scene.index}: {err}", completed_scenes=scene.index
                ) from err
            results.append(result)
            if ckpt_path:
                _write_checkpoint(ckpt_path, fingerprint, result)
        return PipelineResult(backbone=memory.backbone, scenes=tuple(results))


def run_pipeline(
    screenplay: Screenplay,
    backend: Backend,
    config: PipelineConfig | None = None,
) -> PipelineResult:
    return NEAgent(backend, config).run(screenplay)


# --- patch application ------------------------------------------------------

def _ensure_character(
    world: NarrativeWorld, canonical: str, mentions: Iterable[str] = ()
) -> NarrativeWorld:
    canonical = canonical.strip()
    if not canonical:
        return world
    aliases = {m.strip() for m in mentions if m.strip() and not _is_pronoun(m)}
    existing = _find_character(world, canonical)
    if existing is not None:
        merged = replace(existing, aliases=existing.aliases | frozenset(aliases))
        return world.with_character(merged)
    cid = _unique_id(world, _slug(canonical))
    character = Character(
        id=cid,
        canonical_name=canonical,
        aliases=frozenset(aliases),
        history=(AttributeSet({}, 0),),
    )
    return world.with_character(character)


_PRONOUNS = {
    "he", "she", "they", "it", "him", "her", "them", "his", "hers", "theirs",
    "its", "himself", "herself", "themselves", "i", "you", "we", "me", "us",
}


def _is_pronoun(mention: str) -> bool:
    return mention.strip().lower() in _PRONOUNS


def _find_character(world: NarrativeWorld, name: str) -> Character | None:
    lowered = name.strip().lower()
    for character in world.characters.values():
        if character.canonical_name.lower() == lowered:
            return character
    for character in world.characters.values():
        if any(alias.lower() == lowered for alias in character.aliases):
            return character
    return None


def _unique_id(world: NarrativeWorld, base: str) -> str:
    if base not in world.characters:
        return base
    n = 2
    while f"{base}_{n}" in world.characters:
        n += 1
    return f"{base}_{n}"


def _merge_patches(patches) -> list[tuple[str, list, list, tuple[int, int] | None]]:
    """One merged (name, added, removed, cause) per character, input order."""
    order: list[str] = []
    merged: dict[str, tuple[list, list, list]] = {}
    for patch in patches:
        key = patch.character.strip().lower()
        if key not in merged:
            order.append(key)
            merged[key] = (patch.character.strip(), [], [], [])
        entry = merged[key]
        for pair in patch.added:
            if pair not in entry[1]:
                entry[1].append(pair)
        for pair in patch.removed:
            if pair not in entry[2]:
                entry[2].append(pair)
        if patch.cause is not None:
            entry[3].append(patch.cause)
    result = []
    for key in order:
        name, added, removed, causes = merged[key]
        result.append((name, added, removed, causes[0] if causes else None))
    return result


def _apply_patch(
    world: NarrativeWorld,
    scene_index: int,
    name: str,
    added: Sequence[tuple[str, str]],
    removed: Sequence[tuple[str, str]],
    cause: tuple[int, int] | None,
    naturalized: NaturalizedScene,
) -> tuple[NarrativeWorld, str | None]:
    """Apply one merged patch; on an invalid delta reject it and flag the scene."""
    character = _find_character(world, name)
    if character is None:
        world = _ensure_character(world, name)
        character = _find_character(world, name)
        assert character is not None
    current = character.current or AttributeSet({}, 0)
    try:
        delta = Delta(added=frozenset(added), removed=frozenset(removed))
        new_state = apply_delta(current, delta)
    except InvalidDelta as err:
        return world, f"scene {scene_index}: patch for {name!r} rejected ({err})"

    event_id = None
    if cause is not None:
        cause_scene, cause_unit = cause
        event = world.event_at(cause_scene, cause_unit)
        if event is None:
            if cause_scene == naturalized.scene_index and 0 <= cause_unit < len(
                naturalized.sentences
            ):
                text = naturalized.sentences[cause_unit]
            else:
                text = ""
            event = Event(
                id=f"e{cause_scene}_{cause_unit}",
                scene_index=cause_scene,
                unit_index=cause_unit,
                text=text,
            )
            world = world.with_event(event)
        event_id = event.id

    transition = StateTransition(
        character_id=character.id,
        from_step=current.step,
        to_step=new_state.step,
        delta=delta,
        inducing_event=event_id,
    )
    world = world.with_character(character.extended(new_state)).with_transition(
        transition
    )
    return world, None


# --- trace and checkpoints --------------------------------------------------

def _build_trace(
    scene_index: int,
    before: RollingMemory,
    after: RollingMemory,
    units: Sequence[NarrativeUnit],
) -> str:
    lines = [f"SCENE {scene_index} ANALYSIS", "PROFILE PATCHES:"]
    new_transitions = after.world.transitions[len(before.world.transitions):]
    if new_transitions:
        for tr in new_transitions:
            character = after.world.characters[tr.character_id]
            parts = [f"+{k}={v}" for k, v in sorted(tr.delta.added)]
            parts += [f"-{k}={v}" for k, v in sorted(tr.delta.removed)]
            cause = f" (cause {tr.inducing_event})" if tr.inducing_event else ""
            lines.append(f"{character.canonical_name}: {' '.join(parts)}{cause}")
    else:
        lines.append("(none)")
    lines.append("UNIT VERDICTS:")
    if units:
        for unit in units:
            lines.append(f"[{unit.unit_index}] {unit.label.value}: {unit.rationale}")
    else:
        lines.append("(no units)")
    return "\n".join(lines)


def _memory_to_dict(memory: RollingMemory) -> dict:
    return {
        "step": memory.step,
        "backbone": list(memory.backbone),
        "warnings": list(memory.warnings),
        "world": world_to_dict(memory.world),
    }


def _memory_from_dict(data: dict) -> RollingMemory:
    return RollingMemory(
        step=data["step"],
        world=world_from_dict(data["world"]),
        backbone=tuple(data["backbone"]),
        warnings=tuple(data["warnings"]),
    )


def scene_result_to_dict(result: SceneResult) -> dict:
    return {
        "scene_index": result.naturalized.scene_index,
        "sentences": list(result.naturalized.sentences),
        "clusters": [[c, list(m)] for c, m in result.naturalized.clusters],
        "units": [
            {
                "scene_index": u.scene_index,
                "unit_index": u.unit_index,
                "text": u.text,
                "label": u.label.value,
                "rationale": u.rationale,
            }
            for u in result.units
        ],
        "kernel_text": result.kernel_text,
        "trace": result.trace,
        "warnings": list(result.warnings),
        "memory_after": _memory_to_dict(result.memory_after),
    }


def scene_result_from_dict(data: dict) -> SceneResult:
    naturalized = NaturalizedScene(
        scene_index=data["scene_index"],
        sentences=tuple(data["sentences"]),
        clusters=tuple((c, tuple(m)) for c, m in data["clusters"]),
    )
    units = tuple(
        NarrativeUnit(
            scene_index=u["scene_index"],
            unit_index=u["unit_index"],
            text=u["text"],
            label=UnitLabel(u["label"]),
            rationale=u["rationale"],
        )
        for u in data["units"]
    )
    return SceneResult(
        naturalized=naturalized,
        units=units,
        kernel_text=data["kernel_text"],
        trace=data["trace"],
        memory_after=_memory_from_dict(data["memory_after"]),
        warnings=tuple(data["warnings"]),
    )


def _write_checkpoint(path: Path, fingerprint: str, result: SceneResult) -> None:
    payload = {"config_hash": fingerprint, **scene_result_to_dict(result)}
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _load_checkpoint(
    path: Path, fingerprint: str, scene_index: int
) -> tuple[SceneResult, RollingMemory] | None:
    """A usable checkpoint resumes the scene; stale or foreign ones are ignored."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError):
        return None
    if data.get("config_hash") != fingerprint or data.get("scene_index") != scene_index:
        return None
    result = scene_result_from_dict(data)
    return result, result.memory_after
