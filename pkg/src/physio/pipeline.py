"""End-to-end query orchestration: cache, validation, identification, linking,
retrieval, generation, attribution, exercises, medications, assembly.

Health-domain safety rules live here: validation failures fail closed to a
fixed refusal, medication-stage failures degrade to an empty medication list,
and only verified over-the-counter records are ever returned.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from . import llm_gateway
from .grounding import AnswerSentence, GroundedAnswer, attribute_references
from .kb_store import CacheError, ExerciseRecord, KnowledgeBase, MedicationRecord, cache_key_for
from .linker import FUZZY_ACCEPT_THRESHOLD, LinkResult, link_condition, link_medication
from .llm_gateway import CompletionBackend, LlmError
from .text_index import build_index, rank, split_sentences

MAX_QUERY_CHARS = 2000

DISCLAIMER = (
    "This assistant is a research demonstration, not a medical professional. "
    "We strongly advise users to consult with a specialist before making any "
    "decisions regarding their health."
)

DEFAULT_RESPONSE_TEXT = (
    "I can only help with physiotherapy-related questions asked in English. "
    "Please describe your physical complaint, for example where it hurts and "
    "how it started, and I will do my best to help."
)


class InvalidQueryError(Exception):
    """Empty, oversized, or otherwise unusable user input."""


class PipelineError(Exception):
    """Answer generation failed; surfaced to the API as a 502-class error."""


@dataclass(frozen=True)
class PipelineConfig:
    top_docs: int = 5
    max_exercises: int = 5
    rng_seed: int | None = None
    default_response_text: str = DEFAULT_RESPONSE_TEXT
    fuzzy_threshold: float = FUZZY_ACCEPT_THRESHOLD

    def __post_init__(self) -> None:
        if self.top_docs < 1:
            raise ValueError(f"top_docs must be >= 1, got {self.top_docs}")
        if self.max_exercises < 0:
            raise ValueError(f"max_exercises must be >= 0, got {self.max_exercises}")


@dataclass
class PipelineTrace:
    """Observability record; stages appear in execution order."""

    validated: bool | None = None
    identified_condition: str | None = None
    link: LinkResult | None = None
    retrieved_doc_ids: list[str] = field(default_factory=list)
    cache_hit: bool = False
    stage_errors: list[tuple[str, str]] = field(default_factory=list)
    stages: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "validated": self.validated,
            "identified_condition": self.identified_condition,
            "link": None if self.link is None else {"condition_id": self.link.condition_id, "method": self.link.method},
            "retrieved_doc_ids": list(self.retrieved_doc_ids),
            "cache_hit": self.cache_hit,
            "stage_errors": [list(item) for item in self.stage_errors],
            "stages": list(self.stages),
        }


def filter_otc(records: list[MedicationRecord]) -> list[MedicationRecord]:
    """Only over-the-counter records, order preserved."""
    return [record for record in records if record.otc]


def sample_exercises(
    kb: KnowledgeBase, condition_id: str, max_exercises: int, rng_seed: int | None = None
) -> list[ExerciseRecord]:
    """Uniform sample without replacement, clamped to the available count."""
    if max_exercises < 0:
        raise ValueError(f"max_exercises must be >= 0, got {max_exercises}")
    available = kb.exercises_for(condition_id)
    count = min(max_exercises, len(available))
    rng = random.Random(rng_seed) if rng_seed is not None else random.Random()
    return rng.sample(available, count)


def handle_query(
    query: str,
    kb: KnowledgeBase,
    backend: CompletionBackend,
    config: PipelineConfig | None = None,
) -> tuple[GroundedAnswer, PipelineTrace]:
    config = config or PipelineConfig()
    trace = PipelineTrace()

    trimmed = query.strip()
    if not trimmed:
        raise InvalidQueryError("query must be non-empty")
    if len(trimmed) > MAX_QUERY_CHARS:
        raise InvalidQueryError(f"query exceeds {MAX_QUERY_CHARS} characters ({len(trimmed)})")

    # (0) cache lookup; any cache failure is a miss
    trace.stages.append("cache_lookup")
    cache_key = cache_key_for(trimmed)
    entry = None
    try:
        entry = kb.cache_get(cache_key)
    except CacheError as exc:
        trace.stage_errors.append(("cache_lookup", str(exc)))
    if entry is not None:
        try:
            answer = GroundedAnswer.from_dict(json.loads(entry.response))
            trace.cache_hit = True
            return answer, trace
        except (KeyError, TypeError, ValueError) as exc:
            trace.stage_errors.append(("cache_lookup", f"corrupt cache entry: {exc}"))

    # (1) validation, fail closed
    trace.stages.append("validation")
    try:
        validated = llm_gateway.validate_prompt(backend, trimmed)
    except LlmError as exc:
        trace.stage_errors.append(("validation", str(exc)))
        validated = False
    trace.validated = validated
    if not validated:
        return _default_answer(config), trace

    # (2) condition identification; failure falls through to the no-match path
    trace.stages.append("condition_identification")
    condition_name: str | None = None
    try:
        condition_name = llm_gateway.identify_condition(backend, trimmed)
        trace.identified_condition = condition_name
    except LlmError as exc:
        trace.stage_errors.append(("condition_identification", str(exc)))

    # (3) linking
    link = LinkResult(condition_id=None, method="none")
    if condition_name:
        trace.stages.append("condition_linking")
        link = link_condition(kb, condition_name)
    trace.link = link
    if not link.matched:
        return _direct_answer(backend, trimmed, trace), trace

    # (4) retrieval: BM25 over full page bodies against the raw user query
    trace.stages.append("retrieval")
    documents = kb.documents_for(link.condition_id)
    index = build_index([(doc.id, doc.body) for doc in documents])
    ranked = rank(index, trimmed, config.top_docs)
    by_id = {doc.id: doc for doc in documents}
    retrieved = [by_id[doc_id] for doc_id, _ in ranked]
    trace.retrieved_doc_ids = [doc.id for doc in retrieved]
    if not retrieved:
        # condition linked but nothing lexically relevant: degrade to ungrounded
        trace.stage_errors.append(("retrieval", "no document shares a token with the query"))
        return _direct_answer(backend, trimmed, trace), trace

    # (5) generation; failures surface as pipeline errors
    trace.stages.append("generation")
    try:
        answer_text = llm_gateway.generate_answer(backend, trimmed, retrieved)
    except LlmError as exc:
        raise PipelineError(f"answer generation failed: {exc}") from exc

    # (6) sentence-level reference attribution
    trace.stages.append("attribution")
    sentences = attribute_references(answer_text, retrieved)

    # (7) exercises
    trace.stages.append("exercise_sampling")
    exercises = sample_exercises(kb, link.condition_id, config.max_exercises, config.rng_seed)

    # (8) medications: suggest, link, keep OTC only; failures degrade to none
    trace.stages.append("medication_suggestion")
    linked_medications: list[MedicationRecord] = []
    try:
        names = llm_gateway.suggest_medications(backend, trimmed, condition_name, answer_text)
        seen: set[str] = set()
        for suggested in names:
            if not suggested.strip():
                continue
            record = link_medication(kb, suggested, config.fuzzy_threshold)
            if record is not None and record.name not in seen:
                seen.add(record.name)
                linked_medications.append(record)
    except LlmError as exc:
        trace.stage_errors.append(("medication_suggestion", str(exc)))
        linked_medications = []
    medications = filter_otc(linked_medications)

    # (9) assembly and caching
    trace.stages.append("assembly")
    answer = GroundedAnswer(
        sentences=sentences,
        exercises=exercises,
        medications=medications,
        disclaimer=DISCLAIMER,
        grounded=True,
    )
    try:
        kb.cache_put(cache_key, json.dumps(answer.to_dict(), ensure_ascii=False))
    except CacheError as exc:
        trace.stage_errors.append(("cache_store", str(exc)))
    return answer, trace


def _default_answer(config: PipelineConfig) -> GroundedAnswer:
    return GroundedAnswer(
        sentences=[AnswerSentence(text=config.default_response_text)],
        exercises=[],
        medications=[],
        disclaimer=DISCLAIMER,
        grounded=False,
    )


def _direct_answer(backend: CompletionBackend, query: str, trace: PipelineTrace) -> GroundedAnswer:
    trace.stages.append("direct_answer")
    try:
        text = llm_gateway.answer_directly(backend, query)
    except LlmError as exc:
        raise PipelineError(f"direct answer failed: {exc}") from exc
    return GroundedAnswer(
        sentences=[AnswerSentence(text=sentence) for sentence in split_sentences(text)],
        exercises=[],
        medications=[],
        disclaimer=DISCLAIMER,
        grounded=False,
    )
