"""Parse XML-style screenplays and plain prose into a uniform scene sequence.

Screenplay corpora use XML-ish structural tags but are rarely valid XML
(unescaped ampersands, stray angle brackets in dialogue are common), so the
parser is a tolerant tag scanner rather than an XML library. Tag names are
schema parameters; unknown tags survive as kind "other". The parser is total:
every non-whitespace source character lands in exactly one element, in
document order, so the markup-stripped source round-trips.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .errors import EmptyDocument, MalformedMarkup


class ElementKind(Enum):
    HEADING = "heading"
    ACTION = "action"
    DIALOGUE = "dialogue"
    TRANSITION = "transition"
    OTHER = "other"


class SourceFormat(Enum):
    XML_SCRIPT = "xml_script"
    PROSE_CHAPTERS = "prose_chapters"


@dataclass(frozen=True)
class Element:
    kind: ElementKind
    text: str
    speaker: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("element text must be non-empty after trimming")
        if (self.kind is ElementKind.DIALOGUE) != (self.speaker is not None):
            raise ValueError("speaker is present iff the element is dialogue")


@dataclass(frozen=True)
class Scene:
    index: int
    heading: str
    elements: tuple[Element, ...]


@dataclass(frozen=True)
class Screenplay:
    id: str
    title: str
    scenes: tuple[Scene, ...]
    source_format: SourceFormat
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.scenes:
            raise ValueError("a screenplay must contain at least one scene")
        for expected, scene in enumerate(self.scenes):
            if scene.index != expected:
                raise ValueError("scene indices must increase strictly from 0")


@dataclass(frozen=True)
class TagSchema:
    """Tag names per element kind. Defaults follow common screenplay-corpus markup."""

    scene: str = "scene"
    heading: str = "heading"
    action: str = "action"
    dialogue: str = "dialogue"
    speaker: str = "speaker"
    transition: str = "transition"

    @classmethod
    def from_file(cls, path) -> "TagSchema":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown tag-schema keys: {sorted(unknown)}")
        return cls(**data)

    def kind_of(self, tag: str) -> ElementKind | None:
        mapping = {
            self.heading: ElementKind.HEADING,
            self.action: ElementKind.ACTION,
            self.dialogue: ElementKind.DIALOGUE,
            self.transition: ElementKind.TRANSITION,
        }
        return mapping.get(tag)


DEFAULT_SCHEMA = TagSchema()
DEFAULT_CHAPTER_PATTERN = r"(?im)^[ \t]*chapter\b[^\n]*$"

_TAG_RE = re.compile(r"<(/?)([A-Za-z_][\w.-]*)((?:\s[^<>]*)?)(/?)>")
_WS_RE = re.compile(r"\s+")


def normalize_ws(text: str) -> str:
    """Collapse all whitespace runs to single spaces and trim."""
    return _WS_RE.sub(" ", text).strip()


def markup_stripped(raw: str) -> str:
    """Source text with every tag removed and whitespace normalized."""
    return normalize_ws(_TAG_RE.sub(" ", raw))


@dataclass
class _OpenTag:
    name: str
    position: int
    texts: list[str] = field(default_factory=list)
    speaker: str | None = None


def _scan(raw: str) -> Iterable[tuple[str, object, int]]:
    """Yield ("text", chunk, pos) and ("open"/"close"/"selfclose", name, pos)."""
    pos = 0
    for match in _TAG_RE.finditer(raw):
        if match.start() > pos:
            yield "text", raw[pos:match.start()], pos
        closing, name, _attrs, selfclosing = match.groups()
        if closing:
            yield "close", name, match.start()
        elif selfclosing:
            yield "selfclose", name, match.start()
        else:
            yield "open", name, match.start()
        pos = match.end()
    if pos < len(raw):
        yield "text", raw[pos:], pos


def parse_script(
    raw: str,
    schema: TagSchema = DEFAULT_SCHEMA,
    doc_id: str = "doc",
    title: str = "",
) -> Screenplay:
    """Parse XML-style screenplay markup into a Screenplay.

    Raises MalformedMarkup on unclosed or mismatched tags and EmptyDocument
    when the input contains no scene tags.
    """
    scenes: list[Scene] = []
    warnings: list[str] = []
    preamble: list[str] = []  # non-whitespace text before the first scene

    stack: list[_OpenTag] = []
    current_elements: list[Element] = []
    current_heading = ""
    in_scene = False

    def innermost_element_tag() -> _OpenTag | None:
        for entry in reversed(stack):
            if entry.name != schema.scene:
                return entry
        return None

    def attach_to_prior_scene(element: Element, pos: int) -> None:
        # keeps document order: stray text lands on the scene it follows
        last = scenes[-1]
        scenes[-1] = Scene(last.index, last.heading, last.elements + (element,))
        warnings.append(f"text outside any scene at offset {pos}")

    def flush_element(entry: _OpenTag) -> None:
        nonlocal current_heading
        kind = schema.kind_of(entry.name) or ElementKind.OTHER
        text = normalize_ws(" ".join(entry.texts))
        speaker = None
        if kind is ElementKind.DIALOGUE:
            speaker = entry.speaker
            if not speaker:
                speaker = "UNKNOWN"
                warnings.append(
                    f"dialogue without a {schema.speaker} tag at offset {entry.position}"
                )
        if not text:
            return
        element = Element(kind=kind, text=text, speaker=speaker)
        if in_scene:
            current_elements.append(element)
            if kind is ElementKind.HEADING and not current_heading:
                current_heading = text
        elif scenes:
            attach_to_prior_scene(element, entry.position)
        else:
            preamble.append(text)

    def close_scene() -> None:
        nonlocal current_elements, current_heading
        index = len(scenes)
        if not current_elements:
            warnings.append(f"scene {index} has no elements")
        scenes.append(Scene(index=index, heading=current_heading, elements=tuple(current_elements)))
        current_elements = []
        current_heading = ""

    for token, value, pos in _scan(raw):
        if token == "text":
            chunk = str(value)
            if not chunk.strip():
                continue
            entry = innermost_element_tag()
            if entry is not None:
                entry.texts.append(chunk)
            elif in_scene:
                # bare text directly inside a scene reads as action
                current_elements.append(Element(ElementKind.ACTION, normalize_ws(chunk)))
            elif scenes:
                attach_to_prior_scene(Element(ElementKind.OTHER, normalize_ws(chunk)), pos)
            else:
                preamble.append(normalize_ws(chunk))
        elif token == "open":
            name = str(value)
            if name == schema.scene:
                if in_scene:
                    raise MalformedMarkup(f"nested <{name}> tag", pos)
                in_scene = True
            else:
                stack.append(_OpenTag(name=name, position=pos))
        elif token == "selfclose":
            continue  # void tags carry no text
        else:  # close
            name = str(value)
            if name == schema.scene:
                if stack:
                    raise MalformedMarkup(f"unclosed <{stack[-1].name}> tag", stack[-1].position)
                if not in_scene:
                    raise MalformedMarkup(f"</{name}> without opening tag", pos)
                in_scene = False
                close_scene()
                continue
            if not stack:
                raise MalformedMarkup(f"</{name}> without opening tag", pos)
            entry = stack.pop()
            if entry.name != name:
                raise MalformedMarkup(
                    f"</{name}> does not match open <{entry.name}>", pos
                )
            # a speaker tag annotates its enclosing dialogue; its text stays
            # in the dialogue body so the source round-trips
            if name == schema.speaker and stack and stack[-1].name == schema.dialogue:
                speaker_name = normalize_ws(" ".join(entry.texts))
                stack[-1].texts.extend(entry.texts)
                if speaker_name:
                    stack[-1].speaker = speaker_name
                continue
            if stack:
                # nested markup inside an element flattens into its parent
                stack[-1].texts.extend(entry.texts)
                continue
            flush_element(entry)

    if stack:
        raise MalformedMarkup(f"unclosed <{stack[-1].name}> tag", stack[-1].position)
    if in_scene:
        raise MalformedMarkup(f"unclosed <{schema.scene}> tag", len(raw))
    if not scenes:
        raise EmptyDocument("no scenes found")

    if preamble:
        warnings.append("text before the first scene kept as a front-matter scene")
        front = Scene(0, "", tuple(Element(ElementKind.OTHER, t) for t in preamble))
        scenes = [front] + [Scene(s.index + 1, s.heading, s.elements) for s in scenes]

    return Screenplay(
        id=doc_id,
        title=title,
        scenes=tuple(scenes),
        source_format=SourceFormat.XML_SCRIPT,
        warnings=tuple(warnings),
    )


def parse_prose(
    raw: str,
    chapter_delimiter: str = DEFAULT_CHAPTER_PATTERN,
    doc_id: str = "doc",
    title: str = "",
) -> Screenplay:
    """Parse plain prose into chapter scenes; paragraphs become action elements."""
    if not raw.strip():
        raise EmptyDocument("prose input is empty")
    pattern = re.compile(chapter_delimiter)
    matches = list(pattern.finditer(raw))

    warnings: list[str] = []
    chapters: list[tuple[str, str]] = []  # (heading line, body)
    if not matches:
        chapters.append(("", raw))
        warnings.append("no chapter delimiter matched; whole text kept as one scene")
    else:
        lead = raw[: matches[0].start()]
        if lead.strip():
            chapters.append(("", lead))
            warnings.append("text before the first chapter kept as a front-matter scene")
        for i, match in enumerate(matches):
            end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
            chapters.append((normalize_ws(match.group(0)), raw[match.end():end]))

    scenes = []
    for heading, body in chapters:
        elements: list[Element] = []
        if heading:
            elements.append(Element(ElementKind.HEADING, heading))
        for paragraph in re.split(r"\n\s*\n", body):
            text = normalize_ws(paragraph)
            if text:
                elements.append(Element(ElementKind.ACTION, text))
        index = len(scenes)
        if not elements:
            warnings.append(f"scene {index} has no elements")
        scenes.append(Scene(index=index, heading=heading, elements=tuple(elements)))

    return Screenplay(
        id=doc_id,
        title=title,
        scenes=tuple(scenes),
        source_format=SourceFormat.PROSE_CHAPTERS,
        warnings=tuple(warnings),
    )


def roundtrip_text(screenplay: Screenplay) -> str:
    """Concatenated element text, whitespace-normalized.

    Equals the markup-stripped source for any parsed document.
    """
    parts = [el.text for scene in screenplay.scenes for el in scene.elements]
    return normalize_ws(" ".join(parts))


def scene_text(scene: Scene) -> str:
    """One readable line per element; dialogue is prefixed with its speaker."""
    lines = []
    for el in scene.elements:
        if el.kind is ElementKind.DIALOGUE and el.speaker and not el.text.startswith(el.speaker):
            lines.append(f"{el.speaker}: {el.text}")
        else:
            lines.append(el.text)
    return "\n".join(lines)


# --- canonical JSON --------------------------------------------------------

def to_canonical_dict(screenplay: Screenplay) -> dict:
    return {
        "id": screenplay.id,
        "title": screenplay.title,
        "source_format": screenplay.source_format.value,
        "scenes": [
            {
                "index": scene.index,
                "heading": scene.heading,
                "elements": [
                    {"kind": el.kind.value, "speaker": el.speaker, "text": el.text}
                    for el in scene.elements
                ],
            }
            for scene in screenplay.scenes
        ],
    }


def from_canonical_dict(data: dict) -> Screenplay:
    scenes = tuple(
        Scene(
            index=scene["index"],
            heading=scene["heading"],
            elements=tuple(
                Element(
                    kind=ElementKind(el["kind"]),
                    text=el["text"],
                    speaker=el.get("speaker"),
                )
                for el in scene["elements"]
            ),
        )
        for scene in data["scenes"]
    )
    return Screenplay(
        id=data["id"],
        title=data["title"],
        scenes=scenes,
        source_format=SourceFormat(data["source_format"]),
    )


def write_canonical_json(screenplay: Screenplay, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_canonical_dict(screenplay), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def read_canonical_json(path) -> Screenplay:
    with open(path, encoding="utf-8") as fh:
        return from_canonical_dict(json.load(fh))
