from pathlib import Path

import pytest

from physio.kb_store import (
    ConditionRecord,
    DocumentStore,
    ExerciseRecord,
    KnowledgeBase,
    MedicationRecord,
    SourceDocument,
    load_knowledge_base,
)
from physio.llm_gateway import MockBackend

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

BACK_PAIN_QUERY = "I feel pain in my lower back. What can I do?"
OFF_TOPIC_QUERY = "What is the capital of France?"
ANKLE_QUERY = "I have sprained my ankle and it is swollen."
NO_MATCH_QUERY = "My tennis elbow is flaring up when I grip things. What can I do?"


def fixture_paths() -> tuple[Path, Path, Path, Path]:
    return (
        DATA_DIR / "conditions.jsonl",
        DATA_DIR / "webpages.jsonl",
        DATA_DIR / "exercises.jsonl",
        DATA_DIR / "medications.jsonl",
    )


@pytest.fixture
def kb() -> KnowledgeBase:
    return load_knowledge_base(*fixture_paths())


@pytest.fixture
def mock_backend() -> MockBackend:
    return MockBackend.from_script(DATA_DIR / "mock_script.jsonl")


def build_kb(
    conditions: list[ConditionRecord] | None = None,
    webpages: list[SourceDocument] | None = None,
    exercises: list[ExerciseRecord] | None = None,
    medications: list[MedicationRecord] | None = None,
) -> KnowledgeBase:
    """Assemble a synthetic in-memory knowledge base from ready-made records."""
    return KnowledgeBase(
        conditions=conditions or [],
        webpages=webpages or [],
        exercises=exercises or [],
        medications=medications or [],
        store=DocumentStore(),
    )


def make_document(doc_id: str, condition_id: str, sentences: list[str], url: str | None = None) -> SourceDocument:
    return SourceDocument(
        id=doc_id,
        condition_id=condition_id,
        url=url or f"https://example.org/{doc_id}",
        title=doc_id,
        body=" ".join(sentences),
        sentences=tuple(sentences),
    )


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    outcomes = []
    for status, reports in (("PASS", terminalreporter.stats.get("passed", [])),
                            ("FAIL", terminalreporter.stats.get("failed", []))):
        for report in reports:
            if "test_acceptance.py" in report.nodeid and getattr(report, "when", None) == "call":
                outcomes.append((report.nodeid.split("::")[-1], status))
    if outcomes:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name, status in sorted(outcomes):
            terminalreporter.write_line(f"  [{status}] {name}")
