import pytest

from conftest import ANKLE_QUERY, BACK_PAIN_QUERY, NO_MATCH_QUERY, OFF_TOPIC_QUERY, build_kb
from physio.kb_store import ConditionRecord, ExerciseRecord, MedicationRecord
from physio.llm_gateway import MockBackend, MockRule
from physio.pipeline import (
    DISCLAIMER,
    InvalidQueryError,
    PipelineConfig,
    PipelineError,
    filter_otc,
    handle_query,
    sample_exercises,
)

CONFIG = PipelineConfig(rng_seed=7)


class TestHandleQuery:
    def test_grounded_back_pain_flow(self, kb, mock_backend):
        answer, trace = handle_query(BACK_PAIN_QUERY, kb, mock_backend, CONFIG)
        assert answer.grounded
        assert trace.validated is True
        assert trace.identified_condition == "back pain"
        assert trace.link.method == "exact"
        assert 1 <= len(trace.retrieved_doc_ids) <= 5
        assert sum(len(s.references) for s in answer.sentences) >= 1
        assert sum(len(s.references) for s in answer.sentences) <= len(answer.sentences)
        assert 0 < len(answer.exercises) <= 5
        assert [m.name for m in answer.medications] == ["ibuprofen", "naproxen"]
        assert all(m.otc for m in answer.medications)
        assert answer.disclaimer == DISCLAIMER

    def test_off_topic_default_response(self, kb, mock_backend):
        answer, trace = handle_query(OFF_TOPIC_QUERY, kb, mock_backend, CONFIG)
        assert not answer.grounded
        assert trace.validated is False
        assert "retrieval" not in trace.stages
        assert "generation" not in trace.stages
        assert "medication_suggestion" not in trace.stages
        assert len(answer.sentences) == 1
        assert not answer.sentences[0].references
        assert answer.exercises == []
        assert answer.medications == []
        assert answer.disclaimer == DISCLAIMER

    def test_validation_gateway_error_fails_closed(self, kb):
        backend = MockBackend([])  # every call fails
        answer, trace = handle_query("my back hurts", kb, backend, CONFIG)
        assert trace.validated is False
        assert not answer.grounded
        assert trace.stage_errors and trace.stage_errors[0][0] == "validation"

    def test_unparseable_validation_fails_closed(self, kb):
        backend = MockBackend([MockRule("validation", "", "maybe")])
        answer, trace = handle_query("my back hurts", kb, backend, CONFIG)
        assert trace.validated is False
        assert not answer.grounded

    def test_cache_hit_skips_gateway(self, kb, mock_backend):
        first, trace1 = handle_query(BACK_PAIN_QUERY, kb, mock_backend, CONFIG)
        calls_after_first = mock_backend.call_count
        second, trace2 = handle_query(BACK_PAIN_QUERY, kb, mock_backend, CONFIG)
        assert trace1.cache_hit is False
        assert trace2.cache_hit is True
        assert mock_backend.call_count == calls_after_first
        assert second == first

    def test_cache_key_normalization(self, kb, mock_backend):
        handle_query(BACK_PAIN_QUERY, kb, mock_backend, CONFIG)
        _, trace = handle_query("  i FEEL pain in my lower back. what can i do?  ", kb, mock_backend, CONFIG)
        assert trace.cache_hit is True

    def test_unlinkable_condition_direct_answer(self, kb, mock_backend):
        answer, trace = handle_query(NO_MATCH_QUERY, kb, mock_backend, CONFIG)
        assert not answer.grounded
        assert trace.link.method == "none"
        assert trace.retrieved_doc_ids == []
        assert "direct_answer" in trace.stages
        assert all(not s.references for s in answer.sentences)
        assert answer.exercises == []
        assert answer.medications == []

    def test_identification_failure_falls_through_to_direct(self, kb):
        backend = MockBackend(
            [
                MockRule("validation", "", "True"),
                MockRule("condition_identification", "", " ".join(["w"] * 40)),
                MockRule("direct", "", "General advice only."),
            ]
        )
        answer, trace = handle_query("something hurts somewhere", kb, backend, CONFIG)
        assert not answer.grounded
        assert trace.identified_condition is None
        assert trace.stage_errors and trace.stage_errors[0][0] == "condition_identification"

    def test_medication_failure_degrades(self, kb, mock_backend):
        answer, trace = handle_query(ANKLE_QUERY, kb, mock_backend, CONFIG)
        assert answer.grounded
        assert answer.medications == []
        assert any(stage == "medication_suggestion" for stage, _ in trace.stage_errors)
        assert sum(len(s.references) for s in answer.sentences) >= 1

    def test_generation_failure_is_pipeline_error(self, kb):
        backend = MockBackend(
            [
                MockRule("validation", "", "True"),
                MockRule("condition_identification", "", "back pain"),
            ]
        )
        with pytest.raises(PipelineError):
            handle_query("my lower back aches", kb, backend, CONFIG)

    def test_retrieval_bound_and_ownership(self, kb, mock_backend):
        config = PipelineConfig(top_docs=2, rng_seed=7)
        _, trace = handle_query(BACK_PAIN_QUERY, kb, mock_backend, config)
        assert len(trace.retrieved_doc_ids) <= 2
        back_pain_ids = {d.id for d in kb.documents_for("back-pain")}
        assert set(trace.retrieved_doc_ids) <= back_pain_ids

    def test_no_lexical_overlap_degrades_to_direct(self, mock_backend):
        kb = build_kb(
            conditions=[ConditionRecord("back-pain", "back pain", ())],
            webpages=[],
        )
        backend = MockBackend(
            [
                MockRule("validation", "", "True"),
                MockRule("condition_identification", "", "back pain"),
                MockRule("direct", "", "No sources available; general advice."),
            ]
        )
        answer, trace = handle_query("my lower back aches", kb, backend, CONFIG)
        assert not answer.grounded
        assert trace.retrieved_doc_ids == []
        assert any(stage == "retrieval" for stage, _ in trace.stage_errors)

    def test_empty_query_rejected(self, kb, mock_backend):
        with pytest.raises(InvalidQueryError):
            handle_query("   ", kb, mock_backend, CONFIG)

    def test_oversized_query_rejected(self, kb, mock_backend):
        with pytest.raises(InvalidQueryError):
            handle_query("x" * 2001, kb, mock_backend, CONFIG)

    def test_default_config_used_when_none(self, kb, mock_backend):
        answer, _ = handle_query(OFF_TOPIC_QUERY, kb, mock_backend)
        assert not answer.grounded


class TestSampleExercises:
    def test_clamps_to_population(self, kb):
        exercises = sample_exercises(kb, "ankle-sprain", 5, rng_seed=1)
        assert len(exercises) == 3
        assert {e.id for e in exercises} == {"ex-ankle-001", "ex-ankle-002", "ex-ankle-003"}

    def test_samples_five_distinct_from_ten(self):
        kb = build_kb(
            conditions=[ConditionRecord("c1", "back pain", ())],
            exercises=[
                ExerciseRecord(f"e{i}", "c1", f"exercise {i}", f"https://example.org/v{i}") for i in range(10)
            ],
        )
        sampled = sample_exercises(kb, "c1", 5, rng_seed=11)
        assert len(sampled) == 5
        assert len({e.id for e in sampled}) == 5

    def test_seeded_determinism(self, kb):
        first = sample_exercises(kb, "back-pain", 5, rng_seed=42)
        second = sample_exercises(kb, "back-pain", 5, rng_seed=42)
        assert first == second

    def test_unknown_condition(self, kb):
        from physio.kb_store import UnknownConditionError

        with pytest.raises(UnknownConditionError):
            sample_exercises(kb, "no-such", 5, rng_seed=1)

    def test_zero_max(self, kb):
        assert sample_exercises(kb, "back-pain", 0, rng_seed=1) == []


class TestFilterOtc:
    def test_drops_non_otc(self):
        ibuprofen = MedicationRecord("ibuprofen", True, "")
        codeine = MedicationRecord("codeine", False, "")
        assert filter_otc([ibuprofen, codeine]) == [ibuprofen]

    def test_empty(self):
        assert filter_otc([]) == []

    def test_all_non_otc(self):
        assert filter_otc([MedicationRecord("codeine", False, "")]) == []


class TestConfig:
    def test_top_docs_must_be_positive(self):
        with pytest.raises(ValueError):
            PipelineConfig(top_docs=0)

    def test_max_exercises_non_negative(self):
        with pytest.raises(ValueError):
            PipelineConfig(max_exercises=-1)
