"""Template loading, rendering, and output-contract parsing."""

import shutil
from pathlib import Path

import pytest

import story_spine.prompts
from story_spine.errors import ContractViolation, MissingSlot, UnknownSlot
from story_spine.prompts import (
    CoreferenceClusters,
    MicroDrama,
    OutputKind,
    ProfilePatch,
    TemplateId,
    load_templates,
    parse_output,
    render,
)

TEMPLATE_SRC = Path(story_spine.prompts.__file__).parent / "templates"


@pytest.fixture(scope="module")
def templates():
    return load_templates()


class TestLoading:
    def test_all_seven_present(self, templates):
        assert set(templates) == set(TemplateId)

    def test_versions_are_short_hashes(self, templates):
        for template in templates.values():
            assert len(template.version) == 12
            int(template.version, 16)

    def test_version_is_content_addressed(self, templates, tmp_path):
        for name in [
            "pronoun_replacement",
            "entity_profile_update",
            "narrative_units",
            "counterfactual_analysis",
            "kernel_events",
            "voting_protocol",
            "ood_verification",
        ]:
            shutil.copy(TEMPLATE_SRC / f"{name}.txt", tmp_path / f"{name}.txt")
        target = tmp_path / "kernel_events.txt"
        target.write_text(
            target.read_text(encoding="utf-8") + "\n(wording tweak)\n",
            encoding="utf-8",
        )
        modified = load_templates(tmp_path)
        assert (
            modified[TemplateId.KERNEL_EVENTS].version
            != templates[TemplateId.KERNEL_EVENTS].version
        )
        assert (
            modified[TemplateId.NARRATIVE_UNITS].version
            == templates[TemplateId.NARRATIVE_UNITS].version
        )

    def test_missing_template_rejected(self, tmp_path):
        shutil.copy(TEMPLATE_SRC / "kernel_events.txt", tmp_path / "kernel_events.txt")
        with pytest.raises(ValueError, match="missing templates"):
            load_templates(tmp_path)

    def test_undeclared_slot_rejected(self, tmp_path):
        (tmp_path / "bad.txt").write_text(
            "id: kernel_events\noutput: micro_drama\nslots: nucleus_units\n"
            "---system---\nsys\n---user---\nTASK: kernel_events\n{{other_slot}}\n",
            encoding="utf-8",
        )
        with pytest.raises(ValueError, match="declared slots"):
            load_templates(tmp_path)

    def test_every_user_text_declares_its_task(self, templates):
        for template_id, template in templates.items():
            assert template.user_template.startswith(f"TASK: {template_id.value}")

    def test_template_is_faithful_to_its_contract(self, templates):
        counterfactual = templates[TemplateId.COUNTERFACTUAL_ANALYSIS]
        for dimension in (
            "KEY INFORMATION",
            "CAUSAL CHAIN",
            "CHARACTER CONTINUITY",
            "PLOT CLARITY",
            "TEMPORAL ORDER",
        ):
            assert dimension in counterfactual.user_template
        assert "STOP" in templates[TemplateId.KERNEL_EVENTS].user_template
        assert templates[TemplateId.KERNEL_EVENTS].expected_output is OutputKind.MICRO_DRAMA


class TestRender:
    def test_deterministic(self, templates):
        template = templates[TemplateId.NARRATIVE_UNITS]
        first = render(template, {"rewritten_text": "One. Two."})
        second = render(template, {"rewritten_text": "One. Two."})
        assert first == second

    def test_no_unresolved_placeholders(self, templates):
        template = templates[TemplateId.COUNTERFACTUAL_ANALYSIS]
        system, user = render(
            template,
            {
                "unit_marker": "UNIT scene=0 index=0",
                "unit_text": "Leon leaves.",
                "scene_units": "unit=0: Leon leaves.",
                "backbone": "(empty)",
                "profile_section": "(no profile context)",
                "exemplar": "worked example",
            },
        )
        assert "{{" not in system and "{{" not in user
        assert "UNIT scene=0 index=0" in user

    def test_missing_slot(self, templates):
        with pytest.raises(MissingSlot):
            render(templates[TemplateId.NARRATIVE_UNITS], {})

    def test_empty_bound_slot(self, templates):
        with pytest.raises(MissingSlot):
            render(templates[TemplateId.NARRATIVE_UNITS], {"rewritten_text": "  "})

    def test_unknown_slot(self, templates):
        with pytest.raises(UnknownSlot):
            render(
                templates[TemplateId.NARRATIVE_UNITS],
                {"rewritten_text": "x", "extra": "y"},
            )


class TestParseClusters:
    def test_golden(self):
        raw = (
            "CLUSTER: Leon = Leon; he; the stranger\n"
            "CLUSTER: Mira = MIRA\n"
            "REWRITTEN:\nLeon nods. Mira waits.\n"
        )
        parsed = parse_output(TemplateId.PRONOUN_REPLACEMENT, raw)
        assert parsed == CoreferenceClusters(
            clusters=(
                ("Leon", ("Leon", "he", "the stranger")),
                ("Mira", ("MIRA",)),
            ),
            rewritten="Leon nods. Mira waits.",
        )

    def test_missing_rewritten_section(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.PRONOUN_REPLACEMENT, "CLUSTER: A = a")

    def test_malformed_cluster_line(self):
        with pytest.raises(ContractViolation):
            parse_output(
                TemplateId.PRONOUN_REPLACEMENT, "CLUSTER: no equals\nREWRITTEN:\nx"
            )

    def test_empty_rewritten(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.PRONOUN_REPLACEMENT, "REWRITTEN:\n   \n")


class TestParsePatches:
    def test_golden_blocks(self):
        raw = (
            "PROFILE: Leon\nADD: title = knight\nCAUSE: scene=2 unit=1\nEND\n"
            "PROFILE: Mira\nREMOVE: location = York\nADD: location = London\nEND\n"
        )
        patches = parse_output(TemplateId.ENTITY_PROFILE_UPDATE, raw)
        assert patches == (
            ProfilePatch("Leon", (("title", "knight"),), (), (2, 1)),
            ProfilePatch(
                "Mira", (("location", "London"),), (("location", "York"),), None
            ),
        )

    def test_no_changes(self):
        assert parse_output(TemplateId.ENTITY_PROFILE_UPDATE, "NO CHANGES") == ()

    def test_block_without_end(self):
        with pytest.raises(ContractViolation):
            parse_output(
                TemplateId.ENTITY_PROFILE_UPDATE, "PROFILE: Leon\nADD: a = b"
            )

    def test_unexpected_line_in_block(self):
        with pytest.raises(ContractViolation):
            parse_output(
                TemplateId.ENTITY_PROFILE_UPDATE,
                "PROFILE: Leon\nchit-chat\nEND",
            )

    def test_malformed_cause(self):
        with pytest.raises(ContractViolation):
            parse_output(
                TemplateId.ENTITY_PROFILE_UPDATE,
                "PROFILE: Leon\nCAUSE: somewhere\nEND",
            )

    def test_prose_without_blocks(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.ENTITY_PROFILE_UPDATE, "nothing happened")


class TestParseUnits:
    def test_numbered_list(self):
        raw = "1. Leon rides north.\n2) Mira follows.\n"
        assert parse_output(TemplateId.NARRATIVE_UNITS, raw) == (
            "Leon rides north.",
            "Mira follows.",
        )

    def test_numbering_must_be_contiguous(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.NARRATIVE_UNITS, "1. a\n3. b")

    def test_no_numbered_lines(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.NARRATIVE_UNITS, "just prose")


class TestParseCoherence:
    def test_broken_with_notes(self):
        raw = (
            "KEY INFORMATION: the theft is lost\n"
            "CAUSAL CHAIN: the arrest dangles\n"
            "VERDICT: BROKEN\n"
        )
        verdict = parse_output(TemplateId.COUNTERFACTUAL_ANALYSIS, raw)
        assert verdict.broken is True
        assert ("KEY INFORMATION", "the theft is lost") in verdict.notes

    def test_continuous(self):
        verdict = parse_output(
            TemplateId.COUNTERFACTUAL_ANALYSIS, "VERDICT: CONTINUOUS"
        )
        assert verdict.broken is False

    def test_missing_verdict(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.COUNTERFACTUAL_ANALYSIS, "KEY INFORMATION: x")

    def test_unknown_verdict_word(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.COUNTERFACTUAL_ANALYSIS, "VERDICT: MAYBE")


class TestParseMicroDrama:
    def test_stop_token_stripped(self):
        parsed = parse_output(TemplateId.KERNEL_EVENTS, "Leon rides.\nMira waits.\nSTOP\n")
        assert parsed == MicroDrama("Leon rides.\nMira waits.")

    def test_missing_stop(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.KERNEL_EVENTS, "Leon rides.")

    def test_stop_must_be_final_line(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.KERNEL_EVENTS, "STOP\nLeon rides.")


class TestParseBallot:
    def test_majority_winner_is_first(self):
        raw = (
            "CANDIDATE 1: {e1, e2}\nVOTES: 2\n"
            "CANDIDATE 2: {e1}\nVOTES: 1\n"
            "CANDIDATE 3: {}\nVOTES: 0\n"
        )
        ballot = parse_output(TemplateId.VOTING_PROTOCOL, raw)
        assert ballot.votes == (2, 1, 0)
        assert ballot.winner_index == 0
        assert ballot.candidates[ballot.winner_index] == "{e1, e2}"

    def test_tie_selects_first_best(self):
        raw = "CANDIDATE 1: a\nVOTES: 2\nCANDIDATE 2: b\nVOTES: 2\n"
        assert parse_output(TemplateId.VOTING_PROTOCOL, raw).winner_index == 0

    def test_candidate_without_votes(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.VOTING_PROTOCOL, "CANDIDATE 1: a")

    def test_votes_without_candidate(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.VOTING_PROTOCOL, "VOTES: 2")

    def test_numbering_jump(self):
        with pytest.raises(ContractViolation):
            parse_output(
                TemplateId.VOTING_PROTOCOL,
                "CANDIDATE 1: a\nVOTES: 1\nCANDIDATE 3: b\nVOTES: 0",
            )


class TestParseJudge:
    def test_positive(self):
        assert parse_output(TemplateId.OOD_VERIFICATION, "VERDICT: POSITIVE").positive

    def test_negative(self):
        assert not parse_output(
            TemplateId.OOD_VERIFICATION, "VERDICT: NEGATIVE"
        ).positive

    def test_missing(self):
        with pytest.raises(ContractViolation):
            parse_output(TemplateId.OOD_VERIFICATION, "sounds fine to me")


def test_empty_response_always_rejected():
    for template_id in TemplateId:
        with pytest.raises(ContractViolation):
            parse_output(template_id, "   ")
