import pytest

from pathlib import Path

from story_spine.backend import ScriptedBackend
from story_spine.ingest import parse_script

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def two_scene_screenplay():
    raw = (FIXTURES / "two_scene.xml").read_text(encoding="utf-8")
    return parse_script(raw, doc_id="two_scene", title="Two Scenes")


@pytest.fixture
def two_scene_backend():
    return ScriptedBackend.from_file(FIXTURES / "two_scene_rules.json")


@pytest.fixture
def golden_backbone() -> tuple[str, ...]:
    text = (FIXTURES / "golden_backbone.txt").read_text(encoding="utf-8")
    return tuple(line for line in text.splitlines() if line)
