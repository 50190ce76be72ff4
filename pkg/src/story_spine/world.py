"""Symbolic story-world model: characters, events, and state transitions.

A story world holds character attribute trajectories, the events extracted
from the text, and the transitions linking them. Transitions record attribute
deltas (added/removed pair sets); an event is plot-relevant exactly when some
transition depends on it and actually changes state. Continuity of the world
under event removal is the ground truth the counterfactual classifier is
tested against.

All types are immutable values. World construction happens through the
with_* methods, which return new worlds and never mutate history.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

from .errors import EmptyDelta, InvalidDelta, UnknownEvent

Pair = tuple[str, str]


def _clean_pairs(pairs: Iterable[tuple[str, str]], label: str) -> frozenset[Pair]:
    cleaned = set()
    for key, value in pairs:
        key, value = key.strip(), value.strip()
        if not key:
            raise InvalidDelta(f"{label} contains an empty attribute key")
        if not value:
            raise InvalidDelta(f"{label} contains an empty value for key {key!r}")
        cleaned.add((key, value))
    return frozenset(cleaned)


@dataclass(frozen=True)
class AttributeSet:
    """A character's attribute map at one time step."""

    entries: Mapping[str, str]
    step: int = 0

    def __post_init__(self):
        frozen = dict(self.entries)
        for key, value in frozen.items():
            if not key or not key.strip():
                raise ValueError("attribute keys must be non-empty")
            if not value or not value.strip():
                raise ValueError(f"attribute value for {key!r} must be non-empty")
        object.__setattr__(self, "entries", frozen)

    def pairs(self) -> frozenset[Pair]:
        return frozenset(self.entries.items())

    def at_step(self, step: int) -> "AttributeSet":
        return AttributeSet(self.entries, step)


@dataclass(frozen=True)
class Delta:
    """Attribute change as (added, removed) pair sets."""

    added: frozenset[Pair] = frozenset()
    removed: frozenset[Pair] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "added", _clean_pairs(self.added, "added"))
        object.__setattr__(self, "removed", _clean_pairs(self.removed, "removed"))
        overlap = self.added & self.removed
        if overlap:
            raise InvalidDelta(f"pairs both added and removed: {sorted(overlap)}")

    @property
    def empty(self) -> bool:
        return not self.added and not self.removed


class TransitionKind(Enum):
    INCREMENT = "increment"      # pure addition, nothing removed
    MODIFICATION = "modification"  # any removal implies replacement


def classify_transition(delta: Delta) -> TransitionKind:
    if delta.empty:
        raise EmptyDelta("cannot classify an empty delta")
    return TransitionKind.INCREMENT if not delta.removed else TransitionKind.MODIFICATION


def apply_delta(state: AttributeSet, delta: Delta) -> AttributeSet:
    """Next state: (entries minus removed) union added, step incremented.

    The delta must actually change state and must be consistent with it:
    every removed pair present, no added pair present, no key collision
    between added pairs and retained entries.
    """
    if delta.empty:
        raise EmptyDelta("a transition must change state")
    pairs = dict(state.entries)
    for key, value in delta.removed:
        if pairs.get(key) != value:
            raise InvalidDelta(f"removed pair ({key!r}, {value!r}) absent from state")
        del pairs[key]
    for key, value in delta.added:
        if (key, value) in state.pairs():
            raise InvalidDelta(f"added pair ({key!r}, {value!r}) already present")
        if key in pairs:
            raise InvalidDelta(f"added key {key!r} collides with a retained pair")
        pairs[key] = value
    return AttributeSet(pairs, state.step + 1)


def diff_states(before: AttributeSet, after: AttributeSet) -> Delta:
    """Delta whose application takes before to after; empty when identical."""
    return Delta(
        added=after.pairs() - before.pairs(),
        removed=before.pairs() - after.pairs(),
    )


@dataclass(frozen=True)
class Character:
    id: str
    canonical_name: str
    aliases: frozenset[str] = frozenset()
    history: tuple[AttributeSet, ...] = ()

    def __post_init__(self):
        aliases = frozenset(self.aliases) | {self.canonical_name}
        object.__setattr__(self, "aliases", aliases)
        steps = [s.step for s in self.history]
        if steps != sorted(set(steps)):
            raise ValueError(f"history steps for {self.id!r} must strictly increase")

    @property
    def current(self) -> AttributeSet | None:
        return self.history[-1] if self.history else None

    def extended(self, state: AttributeSet) -> "Character":
        if self.history and state.step <= self.history[-1].step:
            raise ValueError(
                f"history for {self.id!r} is append-only; step {state.step} not after"
                f" {self.history[-1].step}"
            )
        return replace(self, history=self.history + (state,))


@dataclass(frozen=True)
class Event:
    id: str
    scene_index: int
    unit_index: int
    text: str


@dataclass(frozen=True)
class StateTransition:
    character_id: str
    from_step: int
    to_step: int
    delta: Delta
    inducing_event: str | None = None  # None marks an intrinsic transition

    def __post_init__(self):
        if self.to_step != self.from_step + 1:
            raise ValueError("to_step must equal from_step + 1")

    @property
    def kind(self) -> TransitionKind | None:
        """None for a recorded no-change step; such transitions never induce."""
        return None if self.delta.empty else classify_transition(self.delta)


@dataclass(frozen=True)
class NarrativeWorld:
    characters: Mapping[str, Character] = field(default_factory=dict)
    events: Mapping[str, Event] = field(default_factory=dict)
    transitions: tuple[StateTransition, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "characters", dict(self.characters))
        object.__setattr__(self, "events", dict(self.events))
        seen_units: dict[tuple[int, int], str] = {}
        for event in self.events.values():
            unit = (event.scene_index, event.unit_index)
            if unit in seen_units:
                raise ValueError(
                    f"events {seen_units[unit]!r} and {event.id!r} share unit {unit}"
                )
            seen_units[unit] = event.id
        for tr in self.transitions:
            if tr.character_id not in self.characters:
                raise ValueError(f"transition references unknown character {tr.character_id!r}")
            if tr.inducing_event is not None and tr.inducing_event not in self.events:
                raise ValueError(f"transition references unknown event {tr.inducing_event!r}")

    def with_character(self, character: Character) -> "NarrativeWorld":
        characters = dict(self.characters)
        characters[character.id] = character
        return NarrativeWorld(characters, self.events, self.transitions)

    def with_event(self, event: Event) -> "NarrativeWorld":
        events = dict(self.events)
        if event.id in events:
            raise ValueError(f"duplicate event id {event.id!r}")
        events[event.id] = event
        return NarrativeWorld(self.characters, events, self.transitions)

    def with_transition(self, transition: StateTransition) -> "NarrativeWorld":
        return NarrativeWorld(
            self.characters, self.events, self.transitions + (transition,)
        )

    def event_at(self, scene_index: int, unit_index: int) -> Event | None:
        for event in self.events.values():
            if (event.scene_index, event.unit_index) == (scene_index, unit_index):
                return event
        return None


def events_inducing_transitions(world: NarrativeWorld) -> set[str]:
    """Event ids on which some state-changing transition depends."""
    return {
        tr.inducing_event
        for tr in world.transitions
        if tr.inducing_event is not None and not tr.delta.empty
    }


def continuity_check(
    world: NarrativeWorld,
    removed_events: set[str],
    kind_weights: Mapping[TransitionKind, float] | None = None,
    threshold: float = 0.0,
) -> bool:
    """True iff every character trajectory survives removing the given events.

    Removal breaks continuity exactly when some state-changing transition
    depends on a removed event. kind_weights is an optional sensitivity knob:
    when set, broken transitions are weighted by kind and continuity holds
    while the total stays at or below threshold. Default is the pure test.
    """
    unknown = set(removed_events) - set(world.events)
    if unknown:
        raise UnknownEvent(f"unknown event ids: {sorted(unknown)}")
    broken = [
        tr
        for tr in world.transitions
        if tr.inducing_event in removed_events and not tr.delta.empty
    ]
    if kind_weights is None:
        return not broken
    weight = sum(kind_weights.get(tr.kind, 1.0) for tr in broken)
    return weight <= threshold


# --- snapshot JSON ----------------------------------------------------------

def _pairs_to_lists(pairs: frozenset[Pair]) -> list[list[str]]:
    return [list(p) for p in sorted(pairs)]


def world_to_dict(world: NarrativeWorld) -> dict:
    return {
        "characters": [
            {
                "id": c.id,
                "canonical_name": c.canonical_name,
                "aliases": sorted(c.aliases),
                "history": [
                    {"step": s.step, "entries": dict(sorted(s.entries.items()))}
                    for s in c.history
                ],
            }
            for c in sorted(world.characters.values(), key=lambda c: c.id)
        ],
        "events": [
            {
                "id": e.id,
                "scene_index": e.scene_index,
                "unit_index": e.unit_index,
                "text": e.text,
            }
            for e in sorted(world.events.values(), key=lambda e: e.id)
        ],
        "transitions": [
            {
                "character_id": t.character_id,
                "from_step": t.from_step,
                "to_step": t.to_step,
                "added": _pairs_to_lists(t.delta.added),
                "removed": _pairs_to_lists(t.delta.removed),
                "kind": t.kind.value if t.kind else None,
                "inducing_event": t.inducing_event,
            }
            for t in world.transitions
        ],
    }


def world_from_dict(data: dict) -> NarrativeWorld:
    characters = {
        c["id"]: Character(
            id=c["id"],
            canonical_name=c["canonical_name"],
            aliases=frozenset(c["aliases"]),
            history=tuple(
                AttributeSet(s["entries"], s["step"]) for s in c["history"]
            ),
        )
        for c in data["characters"]
    }
    events = {
        e["id"]: Event(e["id"], e["scene_index"], e["unit_index"], e["text"])
        for e in data["events"]
    }
    transitions = tuple(
        StateTransition(
            character_id=t["character_id"],
            from_step=t["from_step"],
            to_step=t["to_step"],
            delta=Delta(
                added=frozenset(tuple(p) for p in t["added"]),
                removed=frozenset(tuple(p) for p in t["removed"]),
            ),
            inducing_event=t["inducing_event"],
        )
        for t in data["transitions"]
    )
    return NarrativeWorld(characters, events, transitions)


def dump_world(world: NarrativeWorld, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(world_to_dict(world), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def load_world(path) -> NarrativeWorld:
    with open(path, encoding="utf-8") as fh:
        return world_from_dict(json.load(fh))
