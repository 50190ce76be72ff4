"""Evaluation tests: ROUGE against an independent oracle, compression,
judge protocols, the annotation rubric, and distribution statistics."""

import csv
import math
import random

import pytest

from story_spine.backend import ScriptedBackend
from story_spine.errors import (
    ContractViolation,
    EmptyReference,
    EmptySource,
    NetworkError,
)
from story_spine.evaluation import (
    RUBRIC_DIMENSIONS,
    DimensionScores,
    JudgeTally,
    average_rows,
    chapter_share_stats,
    compression_ratio,
    export_rubric,
    judge_dimensions,
    judge_ood,
    parse_annotation,
    parse_dimension_verdict,
    rouge_l,
    rouge_n,
    rouge_tokenize,
    scene_length_stats,
    write_chapter_share_csv,
    write_scene_stats_csv,
)
from story_spine.ingest import (
    Element,
    ElementKind,
    Scene,
    Screenplay,
    SourceFormat,
)
from oracles import ref_rouge_l, ref_rouge_n, ref_tokens


class TestRougeTokenize:
    def test_lowercase_and_punctuation_stripped(self):
        assert rouge_tokenize("The cat, ran!") == ["the", "cat", "ran"]

    def test_stemming_strips_common_suffixes(self):
        assert rouge_tokenize("jumped jumps walking", stem=True) == [
            "jump",
            "jump",
            "walk",
        ]

    def test_short_stems_left_alone(self):
        assert rouge_tokenize("sing", stem=True) == ["sing"]

    def test_pure_punctuation_dropped(self):
        assert rouge_tokenize("... --- !!!") == []


class TestRougeN:
    def test_known_unigram_case(self):
        score = rouge_n("the cat ran", "the cat sat", n=1)
        assert score.precision == pytest.approx(2 / 3)
        assert score.recall == pytest.approx(2 / 3)
        assert score.f1 == pytest.approx(2 / 3)

    def test_known_bigram_case(self):
        score = rouge_n("the cat ran", "the cat sat", n=2)
        assert score.precision == pytest.approx(1 / 2)
        assert score.recall == pytest.approx(1 / 2)

    def test_identity_scores_one(self):
        for n in (1, 2):
            score = rouge_n("a full backbone line here", "a full backbone line here", n=n)
            assert (score.precision, score.recall, score.f1) == (1.0, 1.0, 1.0)

    def test_disjoint_scores_zero(self):
        score = rouge_n("alpha beta", "gamma delta", n=1)
        assert (score.precision, score.recall, score.f1) == (0.0, 0.0, 0.0)

    def test_clipping_counts_repeats_once_per_reference_copy(self):
        score = rouge_n("the the the", "the cat", n=1)
        assert score.precision == pytest.approx(1 / 3)
        assert score.recall == pytest.approx(1 / 2)

    def test_empty_reference_rejected(self):
        with pytest.raises(EmptyReference):
            rouge_n("something", "", n=1)

    def test_empty_candidate_scores_zero(self):
        score = rouge_n("", "the cat", n=1)
        assert (score.precision, score.recall, score.f1) == (0.0, 0.0, 0.0)

    def test_only_unigrams_and_bigrams_supported(self):
        with pytest.raises(ValueError):
            rouge_n("a", "a", n=3)


class TestRougeL:
    def test_known_subsequence_case(self):
        score = rouge_l("a b c d", "a c b d")
        assert score.precision == pytest.approx(3 / 4)
        assert score.recall == pytest.approx(3 / 4)
        assert score.f1 == pytest.approx(3 / 4)

    def test_identity_scores_one(self):
        score = rouge_l("same line again", "same line again")
        assert (score.precision, score.recall, score.f1) == (1.0, 1.0, 1.0)

    def test_order_matters(self):
        forward = rouge_l("a b c", "a b c")
        reversed_ = rouge_l("c b a", "a b c")
        assert forward.f1 == 1.0
        assert reversed_.f1 == pytest.approx(1 / 3)


_WORDS = (
    "gate", "letter", "village", "magistrate", "crowd", "seal", "rides",
    "walking", "walked", "watches", "horses", "dropped", "running", "The",
    "and,", "quiet!",
)


def _sentence(rng):
    return " ".join(rng.choice(_WORDS) for _ in range(rng.randint(1, 14)))


class TestRougeOracle:
    def test_tokenizer_matches_reference(self):
        rng = random.Random(17)
        for _ in range(50):
            text = _sentence(rng)
            for stem in (False, True):
                assert rouge_tokenize(text, stem) == ref_tokens(text, stem)

    def test_twenty_pairs_match_oracle_within_tolerance(self):
        rng = random.Random(91)
        pairs = [(_sentence(rng), _sentence(rng)) for _ in range(20)]
        for candidate, reference in pairs:
            for stem in (False, True):
                for n in (1, 2):
                    mine = rouge_n(candidate, reference, n=n, stem=stem)
                    theirs = ref_rouge_n(candidate, reference, n, stem)
                    assert mine.precision == pytest.approx(theirs[0], abs=1e-6)
                    assert mine.recall == pytest.approx(theirs[1], abs=1e-6)
                    assert mine.f1 == pytest.approx(theirs[2], abs=1e-6)
                mine = rouge_l(candidate, reference, stem=stem)
                theirs = ref_rouge_l(candidate, reference, stem)
                assert mine.precision == pytest.approx(theirs[0], abs=1e-6)
                assert mine.recall == pytest.approx(theirs[1], abs=1e-6)
                assert mine.f1 == pytest.approx(theirs[2], abs=1e-6)


class TestCompressionRatio:
    def test_known_ratio_is_exact(self):
        assert compression_ratio("w " * 284, "w " * 1000) == 28.4

    def test_identity_is_one_hundred(self):
        assert compression_ratio("a b c", "a b c") == 100.0

    def test_empty_backbone_is_zero(self):
        assert compression_ratio("", "a b c") == 0.0

    def test_empty_source_rejected(self):
        with pytest.raises(EmptySource):
            compression_ratio("a", "   ")

    def test_counter_is_pluggable(self):
        assert compression_ratio("ab", "abcd", counter=len) == 50.0


class TestJudgeTally:
    def test_percentages(self):
        assert JudgeTally(8, 1, 1).percentages == (80.0, 10.0, 10.0)

    def test_percentages_sum_to_one_hundred(self):
        tally = JudgeTally(1, 1, 1)
        # 33.33 * 3 drifts by exactly 0.01; the 1e-9 absorbs float noise
        assert abs(sum(tally.percentages) - 100.0) <= 0.01 + 1e-9

    def test_zero_total(self):
        assert JudgeTally().percentages == (0.0, 0.0, 0.0)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            JudgeTally(-1, 0, 0)


class TestAverageRows:
    def test_three_judge_average(self):
        rows = [
            (96.61, 2.71, 0.68),
            (94.92, 4.41, 0.68),
            (95.76, 3.39, 0.85),
        ]
        assert average_rows(rows) == (95.76, 3.5, 0.74)

    def test_single_row_passthrough(self):
        assert average_rows([(50.0, 25.0, 25.0)]) == (50.0, 25.0, 25.0)

    def test_empty_rows_rejected(self):
        with pytest.raises(ValueError):
            average_rows([])


NUCLEI_SETS = (
    "Leon arrives at the village gate carrying a sealed letter.",
    "The magistrate reads the message in silence.",
)


class TestJudgeOod:
    def test_positive_and_mixed_judges(self, fixtures_dir):
        judges = {
            "optimist": ScriptedBackend.from_file(fixtures_dir / "judge_positive.json"),
            "picky": ScriptedBackend.from_file(fixtures_dir / "judge_mixed.json"),
        }
        report = judge_ood(NUCLEI_SETS, judges)
        tallies = dict(report.rows)
        assert tallies["optimist"] == JudgeTally(2, 0, 0)
        assert tallies["picky"] == JudgeTally(1, 1, 0)
        assert tallies["optimist"].percentages == (100.0, 0.0, 0.0)
        assert tallies["picky"].percentages == (50.0, 50.0, 0.0)
        assert report.average == (75.0, 25.0, 0.0)
        assert report.warnings == ()

    def test_refusals_count_as_rejected(self, fixtures_dir):
        judges = {
            "refuser": ScriptedBackend.from_file(fixtures_dir / "judge_refuser.json")
        }
        report = judge_ood(NUCLEI_SETS, judges)
        assert dict(report.rows)["refuser"] == JudgeTally(0, 0, 2)
        assert report.average == (0.0, 0.0, 100.0)

    def test_unparseable_verdict_counts_as_rejected(self):
        mumbler = ScriptedBackend(
            [{"task": "ood_verification", "contains": [], "response": "hard to say"}]
        )
        report = judge_ood(NUCLEI_SETS, {"mumbler": mumbler})
        assert dict(report.rows)["mumbler"] == JudgeTally(0, 0, 2)

    def test_erroring_judge_dropped_with_warning(self, fixtures_dir):
        class DeadBackend:
            def complete(self, request):
                raise NetworkError("judge offline")

        judges = {
            "dead": DeadBackend(),
            "optimist": ScriptedBackend.from_file(fixtures_dir / "judge_positive.json"),
        }
        report = judge_ood(NUCLEI_SETS, judges)
        assert [name for name, _ in report.rows] == ["optimist"]
        assert len(report.warnings) == 1
        assert "dead" in report.warnings[0]

    def test_no_judges_rejected(self):
        with pytest.raises(ValueError):
            judge_ood(NUCLEI_SETS, {})

    def test_report_serialization(self, fixtures_dir):
        judges = {
            "optimist": ScriptedBackend.from_file(fixtures_dir / "judge_positive.json")
        }
        data = judge_ood(NUCLEI_SETS, judges).to_dict()
        assert data["judges"][0]["name"] == "optimist"
        assert data["judges"][0]["percentages"] == [100.0, 0.0, 0.0]
        assert data["average"] == [100.0, 0.0, 0.0]
        assert data["warnings"] == []


class TestRubric:
    def test_four_dimensions_five_anchors(self):
        assert len(RUBRIC_DIMENSIONS) == 4
        names = [name for name, _ in RUBRIC_DIMENSIONS]
        assert names == [
            "Indispensability (Mainline Necessity)",
            "Coherence",
            "Character Consistency",
            "Satellite Reduction",
        ]
        for _, anchors in RUBRIC_DIMENSIONS:
            assert sorted(anchors) == [1, 2, 3, 4, 5]

    def test_satellite_anchor_wording(self):
        anchors = dict(RUBRIC_DIMENSIONS)["Satellite Reduction"]
        assert anchors[3] == "30-40% satellites"
        assert anchors[2] == "over 50% satellites"

    def test_export_parse_round_trip(self):
        sheet = export_rubric()
        anchors, scores = parse_annotation(sheet)
        assert anchors == {name: table for name, table in RUBRIC_DIMENSIONS}
        assert all(value is None for value in scores.values())

    def test_filled_sheet_parses_scores(self):
        sheet = export_rubric()
        filled = sheet.replace("SCORE: _", "SCORE: 4", 1).replace(
            "SCORE: _", "SCORE: 3.5", 1
        )
        _, scores = parse_annotation(filled)
        assert scores["Indispensability (Mainline Necessity)"] == 4.0
        assert scores["Coherence"] == 3.5
        assert scores["Character Consistency"] is None

    def test_unreadable_score_rejected(self):
        sheet = export_rubric().replace("SCORE: _", "SCORE: great", 1)
        with pytest.raises(ContractViolation):
            parse_annotation(sheet)

    def test_sheet_without_dimensions_rejected(self):
        with pytest.raises(ContractViolation):
            parse_annotation("just some prose")

    def test_score_range_validation(self):
        with pytest.raises(ValueError):
            DimensionScores(0.5, 3.0, 3.0, 3.0)
        with pytest.raises(ValueError):
            DimensionScores(3.0, 3.0, 3.0, 5.5)


class TestDimensionJudge:
    def test_verdict_parsing(self):
        scores = parse_dimension_verdict("SCORES: 3.59 / 3.79 / 3.97 / 3.41")
        assert scores.as_tuple() == (3.59, 3.79, 3.97, 3.41)

    def test_missing_verdict_rejected(self):
        with pytest.raises(ContractViolation):
            parse_dimension_verdict("no numbers here")

    def test_out_of_range_score_rejected(self):
        with pytest.raises(ContractViolation):
            parse_dimension_verdict("SCORES: 2 / 2 / 2 / 6")

    def test_scripted_judge(self, fixtures_dir):
        judge = ScriptedBackend.from_file(fixtures_dir / "judge_dims.json")
        scores = judge_dimensions("Leon arrives.\nLeon leaves.", judge)
        assert scores.as_tuple() == (3.59, 3.79, 3.97, 3.41)

    def test_prompt_carries_rubric_and_backbone(self, fixtures_dir):
        captured = []

        class Recorder:
            def __init__(self, inner):
                self.inner = inner

            def complete(self, request):
                captured.append(request)
                return self.inner.complete(request)

        judge = Recorder(ScriptedBackend.from_file(fixtures_dir / "judge_dims.json"))
        judge_dimensions("Leon arrives.", judge)
        request = captured[0]
        assert export_rubric() in request.user
        assert "BACKBONE:\nLeon arrives." in request.user
        assert "annotator" in request.system

    def test_refusing_judge_rejected(self):
        judge = ScriptedBackend(
            [{"task": "dimension_scores", "contains": [], "refuse": True}]
        )
        with pytest.raises(ContractViolation):
            judge_dimensions("Leon arrives.", judge)

    def test_empty_backbone_rejected(self, fixtures_dir):
        judge = ScriptedBackend.from_file(fixtures_dir / "judge_dims.json")
        with pytest.raises(ValueError):
            judge_dimensions("  ", judge)


def _stats_screenplay(source_sizes, fmt=SourceFormat.PROSE_CHAPTERS, headings=None):
    scenes = []
    for i, size in enumerate(source_sizes):
        heading = headings[i] if headings else ""
        scenes.append(
            Scene(
                index=i,
                heading=heading,
                elements=(Element(ElementKind.ACTION, "w " * size),),
            )
        )
    return Screenplay("stats", "Stats", tuple(scenes), fmt)


def _nuclei(sizes):
    return {i: (("w " * size).strip(),) for i, size in enumerate(sizes) if size}


class TestSceneLengthStats:
    def test_uniform_scenes_give_constant_columns(self):
        screenplay = _stats_screenplay([100, 100, 100, 100])
        rows = scene_length_stats(screenplay, _nuclei([10, 10, 10, 10]))
        assert [r[0] for r in rows] == [0, 1, 2, 3]
        assert {r[1] for r in rows} == {math.log(100)}
        assert {r[2] for r in rows} == {math.log(10)}

    def test_spike_scene_tops_both_columns(self):
        screenplay = _stats_screenplay([100, 100, 1000, 100, 100])
        rows = scene_length_stats(screenplay, _nuclei([5, 5, 50, 5, 5]))
        spike = rows[2]
        assert spike[1] == max(r[1] for r in rows)
        assert spike[2] == max(r[2] for r in rows)

    def test_zero_nuclei_reads_none(self):
        screenplay = _stats_screenplay([10, 10])
        rows = scene_length_stats(screenplay, {0: ("w w w",)})
        assert rows[0][2] == math.log(3)
        assert rows[1][2] is None

    def test_log_base_parameter(self):
        screenplay = _stats_screenplay([100])
        rows = scene_length_stats(screenplay, _nuclei([10]), log_base=10.0)
        assert rows[0][1] == pytest.approx(2.0)
        assert rows[0][2] == pytest.approx(1.0)


class TestChapterShareStats:
    def test_single_chapter_takes_everything(self):
        screenplay = _stats_screenplay([40])
        rows = chapter_share_stats(screenplay, _nuclei([7]))
        assert rows == [("chapter 0", 100.0, 100.0)]

    def test_known_two_chapter_split(self):
        screenplay = _stats_screenplay([138, 862])
        rows = chapter_share_stats(screenplay, _nuclei([206, 794]))
        assert rows[0][1] == pytest.approx(13.8, abs=1e-9)
        assert rows[0][2] == pytest.approx(20.6, abs=1e-9)
        assert rows[1][1] == pytest.approx(86.2, abs=1e-9)
        assert rows[1][2] == pytest.approx(79.4, abs=1e-9)

    def test_columns_sum_to_one_hundred(self):
        rng = random.Random(5)
        sizes = [rng.randint(20, 400) for _ in range(7)]
        nuclei_sizes = [rng.randint(1, 40) for _ in range(7)]
        screenplay = _stats_screenplay(sizes)
        rows = chapter_share_stats(screenplay, _nuclei(nuclei_sizes))
        assert abs(sum(r[1] for r in rows) - 100.0) <= 0.01
        assert abs(sum(r[2] for r in rows) - 100.0) <= 0.01

    def test_chapter_without_nuclei_renormalizes(self):
        screenplay = _stats_screenplay([100, 100])
        rows = chapter_share_stats(screenplay, {0: ("w w",)})
        assert rows[0][2] == 100.0
        assert rows[1][2] == 0.0

    def test_zero_nuclei_column_stays_zero(self):
        screenplay = _stats_screenplay([100, 100])
        rows = chapter_share_stats(screenplay, {})
        assert all(r[2] == 0.0 for r in rows)

    def test_headings_label_chapters(self):
        screenplay = _stats_screenplay(
            [10, 10], headings=["CHAPTER ONE", "CHAPTER TWO"]
        )
        rows = chapter_share_stats(screenplay, {})
        assert [r[0] for r in rows] == ["CHAPTER ONE", "CHAPTER TWO"]


class TestCsvWriters:
    def test_scene_stats_csv(self, tmp_path):
        path = tmp_path / "out" / "scene_stats.csv"
        write_scene_stats_csv([(0, math.log(100), None)], path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["scene_index", "log_source_tokens", "log_nuclei_tokens"]
        assert rows[1] == ["0", f"{math.log(100):.6f}", ""]

    def test_chapter_share_csv(self, tmp_path):
        path = tmp_path / "chapters.csv"
        write_chapter_share_csv([("chapter 0", 13.8, 20.6)], path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["chapter", "source_share_pct", "nuclei_share_pct"]
        assert rows[1] == ["chapter 0", "13.8000", "20.6000"]
