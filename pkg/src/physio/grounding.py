"""Sentence-level reference attribution for generated answers.

The generated answer is segmented, every (generated sentence, source sentence)
pair is scored with BM25, and the top-N pairs become references, where N is
the number of generated sentences. The budget is global across the answer, so
one sentence may carry several references while others carry none.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .kb_store import ExerciseRecord, MedicationRecord, SourceDocument
from .text_index import build_index, score_all, split_sentences


class AttributionError(Exception):
    """Attribution was invoked without any source documents."""


@dataclass(frozen=True)
class Reference:
    document_id: str
    url: str
    source_sentence: str
    score: float

    def to_dict(self) -> dict:
        return {
            "document_id": self.document_id,
            "url": self.url,
            "source_sentence": self.source_sentence,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Reference:
        return cls(
            document_id=data["document_id"],
            url=data["url"],
            source_sentence=data["source_sentence"],
            score=data["score"],
        )


@dataclass
class AnswerSentence:
    text: str
    references: list[Reference] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"text": self.text, "references": [ref.to_dict() for ref in self.references]}

    @classmethod
    def from_dict(cls, data: dict) -> AnswerSentence:
        return cls(
            text=data["text"],
            references=[Reference.from_dict(ref) for ref in data["references"]],
        )


@dataclass
class GroundedAnswer:
    """The unit that is cached and returned to the API layer."""

    sentences: list[AnswerSentence]
    exercises: list[ExerciseRecord]
    medications: list[MedicationRecord]
    disclaimer: str
    grounded: bool

    def to_dict(self) -> dict:
        return {
            "sentences": [sentence.to_dict() for sentence in self.sentences],
            "exercises": [exercise.to_dict() for exercise in self.exercises],
            "medications": [medication.to_dict() for medication in self.medications],
            "disclaimer": self.disclaimer,
            "grounded": self.grounded,
        }

    @classmethod
    def from_dict(cls, data: dict) -> GroundedAnswer:
        return cls(
            sentences=[AnswerSentence.from_dict(item) for item in data["sentences"]],
            exercises=[ExerciseRecord.from_dict(item) for item in data["exercises"]],
            medications=[MedicationRecord.from_dict(item) for item in data["medications"]],
            disclaimer=data["disclaimer"],
            grounded=data["grounded"],
        )


def _sentence_id(document_id: str, ordinal: int) -> str:
    return f"{document_id}#{ordinal:04d}"


def attribute_references(answer_text: str, documents: list[SourceDocument]) -> list[AnswerSentence]:
    """Attach the globally top-N (generated, source) sentence pairs.

    Candidates are sorted by descending score, then generated-sentence order,
    then source sentence id; zero-score pairs are never attached, so the
    result may carry fewer than N references.
    """
    if not answer_text.strip():
        raise ValueError("answer_text must be non-empty")
    if not documents:
        raise AttributionError("attribution requires at least one source document")

    generated = split_sentences(answer_text)
    sentences = [AnswerSentence(text=text) for text in generated]

    corpus: list[tuple[str, str]] = []
    source_lookup: dict[str, tuple[SourceDocument, str]] = {}
    for doc in documents:
        for ordinal, source_sentence in enumerate(doc.sentences):
            source_id = _sentence_id(doc.id, ordinal)
            corpus.append((source_id, source_sentence))
            source_lookup[source_id] = (doc, source_sentence)
    index = build_index(corpus)

    candidates: list[tuple[float, int, str]] = []
    for gen_idx, gen_sentence in enumerate(generated):
        for source_id, score in score_all(index, gen_sentence).items():
            if score > 0.0:
                candidates.append((score, gen_idx, source_id))
    candidates.sort(key=lambda triple: (-triple[0], triple[1], triple[2]))

    budget = len(generated)
    for score, gen_idx, source_id in candidates[:budget]:
        doc, source_sentence = source_lookup[source_id]
        sentences[gen_idx].references.append(
            Reference(document_id=doc.id, url=doc.url, source_sentence=source_sentence, score=score)
        )
    for sentence in sentences:
        sentence.references.sort(key=lambda ref: (-ref.score, ref.document_id, ref.source_sentence))
    return sentences
