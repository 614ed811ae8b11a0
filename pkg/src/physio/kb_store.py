"""Knowledge base: conditions, webpages, exercises, medications, response cache.

Records are ingested from line-delimited JSON fixture files into an embedded
SQLite document store (one logical collection per record kind plus a cache
collection), then served from immutable in-memory indexes. The store keeps the
artifact fully offline and lets the response cache survive restarts.
"""

from __future__ import annotations

import hashlib
import json
import re
import sqlite3
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .text_index import split_sentences

_WHITESPACE_RE = re.compile(r"\s+")


def normalize_name(text: str) -> str:
    """Canonical matching key: lowercased, trimmed, whitespace collapsed."""
    return _WHITESPACE_RE.sub(" ", text.strip().lower())


def cache_key_for(query: str) -> str:
    """SHA-256 hex of the normalized query text."""
    return hashlib.sha256(normalize_name(query).encode("utf-8")).hexdigest()


class KnowledgeBaseError(Exception):
    """Base class for knowledge base failures."""


class LoadError(KnowledgeBaseError):
    """A fixture record could not be parsed; carries file and line."""

    def __init__(self, path: str | Path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class IntegrityError(KnowledgeBaseError):
    """Referential or uniqueness invariant violated across the fixture set."""


class UnknownConditionError(KnowledgeBaseError):
    """Lookup by a condition id that was never ingested."""


class CacheError(KnowledgeBaseError):
    """Cache storage failed; callers must treat this as a miss."""


@dataclass(frozen=True)
class ConditionRecord:
    id: str
    canonical_name: str
    aliases: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"id": self.id, "canonical_name": self.canonical_name, "aliases": list(self.aliases)}


@dataclass(frozen=True)
class SourceDocument:
    id: str
    condition_id: str
    url: str
    title: str
    body: str
    sentences: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "condition_id": self.condition_id,
            "url": self.url,
            "title": self.title,
            "body": self.body,
            "sentences": list(self.sentences),
        }


@dataclass(frozen=True)
class ExerciseRecord:
    id: str
    condition_id: str
    name: str
    video_url: str
    instructions: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "condition_id": self.condition_id,
            "name": self.name,
            "video_url": self.video_url,
            "instructions": self.instructions,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExerciseRecord:
        return cls(
            id=data["id"],
            condition_id=data["condition_id"],
            name=data["name"],
            video_url=data["video_url"],
            instructions=data.get("instructions"),
        )


@dataclass(frozen=True)
class MedicationRecord:
    name: str
    otc: bool
    description: str
    url: str | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "otc": self.otc, "description": self.description, "url": self.url}

    @classmethod
    def from_dict(cls, data: dict) -> MedicationRecord:
        return cls(name=data["name"], otc=data["otc"], description=data["description"], url=data.get("url"))


@dataclass(frozen=True)
class CacheEntry:
    key: str
    response: str
    created_at: float


class DocumentStore:
    """Tiny embedded document store over SQLite.

    Collections are flat (collection, key) -> JSON payload maps with a stable
    position for ingest-order iteration. Writes are last-write-wins; a single
    lock serializes access so concurrent readers and cache writers are safe.
    """

    def __init__(self, path: str | Path = ":memory:"):
        self._conn = sqlite3.connect(str(path), check_same_thread=False)
        self._lock = threading.RLock()
        with self._lock:
            self._conn.execute(
                """
                CREATE TABLE IF NOT EXISTS documents (
                    collection TEXT NOT NULL,
                    key TEXT NOT NULL,
                    position INTEGER NOT NULL DEFAULT 0,
                    payload TEXT NOT NULL,
                    PRIMARY KEY (collection, key)
                )
                """
            )
            self._conn.commit()

    def replace_collection(self, collection: str, items: list[tuple[str, dict]]) -> None:
        with self._lock:
            self._conn.execute("DELETE FROM documents WHERE collection = ?", (collection,))
            self._conn.executemany(
                "INSERT INTO documents (collection, key, position, payload) VALUES (?, ?, ?, ?)",
                [
                    (collection, key, position, json.dumps(payload, ensure_ascii=False))
                    for position, (key, payload) in enumerate(items)
                ],
            )
            self._conn.commit()

    def put(self, collection: str, key: str, payload: dict) -> None:
        with self._lock:
            self._conn.execute(
                """
                INSERT INTO documents (collection, key, position, payload) VALUES (?, ?, 0, ?)
                ON CONFLICT (collection, key) DO UPDATE SET payload = excluded.payload
                """,
                (collection, key, json.dumps(payload, ensure_ascii=False)),
            )
            self._conn.commit()

    def get(self, collection: str, key: str) -> dict | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT payload FROM documents WHERE collection = ? AND key = ?",
                (collection, key),
            ).fetchone()
        return json.loads(row[0]) if row else None

    def all(self, collection: str) -> list[dict]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT payload FROM documents WHERE collection = ? ORDER BY position, key",
                (collection,),
            ).fetchall()
        return [json.loads(row[0]) for row in rows]

    def close(self) -> None:
        with self._lock:
            self._conn.close()


class KnowledgeBase:
    """Immutable after load; unlimited concurrent readers.

    The cache delegates to the document store and therefore supports
    concurrent get/put with last-write-wins semantics.
    """

    def __init__(
        self,
        conditions: list[ConditionRecord],
        webpages: list[SourceDocument],
        exercises: list[ExerciseRecord],
        medications: list[MedicationRecord],
        store: DocumentStore,
    ):
        self._conditions = {record.id: record for record in conditions}
        self._condition_order = [record.id for record in conditions]
        self._webpages = list(webpages)
        self._exercises = list(exercises)
        self._medications = {record.name: record for record in medications}
        self._medication_order = [record.name for record in medications]
        self._webpages_by_condition: dict[str, list[SourceDocument]] = {cid: [] for cid in self._conditions}
        for page in webpages:
            self._webpages_by_condition[page.condition_id].append(page)
        self._exercises_by_condition: dict[str, list[ExerciseRecord]] = {cid: [] for cid in self._conditions}
        for exercise in exercises:
            self._exercises_by_condition[exercise.condition_id].append(exercise)
        self._webpage_by_id = {page.id: page for page in webpages}
        self._store = store

    # -- condition-keyed lookups --------------------------------------------

    @property
    def conditions(self) -> list[ConditionRecord]:
        return [self._conditions[cid] for cid in self._condition_order]

    @property
    def medications(self) -> list[MedicationRecord]:
        return [self._medications[name] for name in self._medication_order]

    def condition(self, condition_id: str) -> ConditionRecord:
        try:
            return self._conditions[condition_id]
        except KeyError:
            raise UnknownConditionError(f"unknown condition id: {condition_id!r}") from None

    def webpage(self, webpage_id: str) -> SourceDocument | None:
        return self._webpage_by_id.get(webpage_id)

    def documents_for(self, condition_id: str) -> list[SourceDocument]:
        """Webpages for the condition, in stable ingest order."""
        if condition_id not in self._conditions:
            raise UnknownConditionError(f"unknown condition id: {condition_id!r}")
        return list(self._webpages_by_condition[condition_id])

    def exercises_for(self, condition_id: str) -> list[ExerciseRecord]:
        """Exercises for the condition, in stable ingest order."""
        if condition_id not in self._conditions:
            raise UnknownConditionError(f"unknown condition id: {condition_id!r}")
        return list(self._exercises_by_condition[condition_id])

    def find_medication_exact(self, name: str) -> MedicationRecord | None:
        """Case-insensitive exact match on the normalized drug name."""
        return self._medications.get(normalize_name(name))

    # -- response cache ------------------------------------------------------

    def cache_get(self, key: str) -> CacheEntry | None:
        try:
            payload = self._store.get("cache", key)
        except Exception as exc:
            raise CacheError(f"cache read failed for {key!r}: {exc}") from exc
        if payload is None:
            return None
        return CacheEntry(key=key, response=payload["response"], created_at=payload["created_at"])

    def cache_put(self, key: str, response: str) -> None:
        payload = {"response": response, "created_at": time.time()}
        try:
            self._store.put("cache", key, payload)
        except Exception as exc:
            raise CacheError(f"cache write failed for {key!r}: {exc}") from exc

    # -- introspection -------------------------------------------------------

    def counts(self) -> dict[str, int]:
        return {
            "conditions": len(self._conditions),
            "webpages": len(self._webpages),
            "exercises": len(self._exercises),
            "medications": len(self._medications),
        }

    def to_json(self) -> str:
        """Deterministic serialization of the four collections, ingest order."""
        return json.dumps(
            {
                "conditions": [record.to_dict() for record in self.conditions],
                "webpages": [page.to_dict() for page in self._webpages],
                "exercises": [exercise.to_dict() for exercise in self._exercises],
                "medications": [record.to_dict() for record in self.medications],
            },
            sort_keys=True,
            ensure_ascii=False,
            separators=(",", ":"),
        )


def _read_jsonl(path: str | Path) -> list[tuple[int, dict]]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise LoadError(path, line_no, "record must be a JSON object")
            records.append((line_no, record))
    return records


def _string_field(record: dict, name: str, path: str | Path, line: int, *, nullable: bool = False) -> str | None:
    if name not in record:
        raise LoadError(path, line, f"missing field {name!r}")
    value = record[name]
    if value is None and nullable:
        return None
    if not isinstance(value, str):
        raise LoadError(path, line, f"field {name!r} must be a string")
    return value


def _require(value: str | None, name: str, path: str | Path, line: int) -> str:
    if value is None or not value.strip():
        raise LoadError(path, line, f"field {name!r} must be non-empty")
    return value


def load_knowledge_base(
    conditions_path: str | Path,
    webpages_path: str | Path,
    exercises_path: str | Path,
    medications_path: str | Path,
    store_path: str | Path = ":memory:",
) -> KnowledgeBase:
    """Ingest the four fixture files and return an immutable handle.

    Sentence segmentation is applied to every webpage body here; all matching
    keys (canonical names, aliases, drug names) are normalized at ingest.
    """
    conditions: list[ConditionRecord] = []
    seen_condition_ids: set[str] = set()
    seen_canonical: set[str] = set()
    for line_no, record in _read_jsonl(conditions_path):
        condition_id = _require(_string_field(record, "id", conditions_path, line_no), "id", conditions_path, line_no)
        canonical = normalize_name(
            _require(
                _string_field(record, "canonical_name", conditions_path, line_no),
                "canonical_name",
                conditions_path,
                line_no,
            )
        )
        raw_aliases = record.get("aliases", [])
        if not isinstance(raw_aliases, list) or any(not isinstance(a, str) for a in raw_aliases):
            raise LoadError(conditions_path, line_no, "field 'aliases' must be a list of strings")
        aliases: list[str] = []
        for alias in (normalize_name(a) for a in raw_aliases):
            if alias and alias != canonical and alias not in aliases:
                aliases.append(alias)
        if condition_id in seen_condition_ids:
            raise IntegrityError(f"duplicate condition id {condition_id!r}")
        if canonical in seen_canonical:
            raise IntegrityError(f"duplicate canonical_name {canonical!r}")
        seen_condition_ids.add(condition_id)
        seen_canonical.add(canonical)
        conditions.append(ConditionRecord(id=condition_id, canonical_name=canonical, aliases=tuple(aliases)))

    webpages: list[SourceDocument] = []
    seen_page_ids: set[str] = set()
    for line_no, record in _read_jsonl(webpages_path):
        page_id = _require(_string_field(record, "id", webpages_path, line_no), "id", webpages_path, line_no)
        condition_id = _require(
            _string_field(record, "condition_id", webpages_path, line_no), "condition_id", webpages_path, line_no
        )
        url = _require(_string_field(record, "url", webpages_path, line_no), "url", webpages_path, line_no)
        title = _string_field(record, "title", webpages_path, line_no) or ""
        body = _require(_string_field(record, "body", webpages_path, line_no), "body", webpages_path, line_no)
        if condition_id not in seen_condition_ids:
            raise IntegrityError(f"webpage {page_id!r} references unknown condition {condition_id!r}")
        if page_id in seen_page_ids:
            raise IntegrityError(f"duplicate webpage id {page_id!r}")
        seen_page_ids.add(page_id)
        webpages.append(
            SourceDocument(
                id=page_id,
                condition_id=condition_id,
                url=url,
                title=title,
                body=body,
                sentences=tuple(split_sentences(body)),
            )
        )

    exercises: list[ExerciseRecord] = []
    seen_exercise_ids: set[str] = set()
    for line_no, record in _read_jsonl(exercises_path):
        exercise_id = _require(_string_field(record, "id", exercises_path, line_no), "id", exercises_path, line_no)
        condition_id = _require(
            _string_field(record, "condition_id", exercises_path, line_no), "condition_id", exercises_path, line_no
        )
        name = _require(_string_field(record, "name", exercises_path, line_no), "name", exercises_path, line_no)
        video_url = _require(
            _string_field(record, "video_url", exercises_path, line_no), "video_url", exercises_path, line_no
        )
        instructions = _string_field(record, "instructions", exercises_path, line_no, nullable=True)
        if condition_id not in seen_condition_ids:
            raise IntegrityError(f"exercise {exercise_id!r} references unknown condition {condition_id!r}")
        if exercise_id in seen_exercise_ids:
            raise IntegrityError(f"duplicate exercise id {exercise_id!r}")
        seen_exercise_ids.add(exercise_id)
        exercises.append(
            ExerciseRecord(
                id=exercise_id,
                condition_id=condition_id,
                name=name,
                video_url=video_url,
                instructions=instructions,
            )
        )

    medications: list[MedicationRecord] = []
    seen_drug_names: set[str] = set()
    for line_no, record in _read_jsonl(medications_path):
        name = normalize_name(
            _require(_string_field(record, "name", medications_path, line_no), "name", medications_path, line_no)
        )
        if "otc" not in record or not isinstance(record["otc"], bool):
            raise LoadError(medications_path, line_no, "field 'otc' must be a boolean")
        description = _string_field(record, "description", medications_path, line_no) or ""
        url = record.get("url")
        if url is not None and not isinstance(url, str):
            raise LoadError(medications_path, line_no, "field 'url' must be a string or null")
        if name in seen_drug_names:
            raise IntegrityError(f"duplicate drug name {name!r}")
        seen_drug_names.add(name)
        medications.append(MedicationRecord(name=name, otc=record["otc"], description=description, url=url))

    store = DocumentStore(store_path)
    store.replace_collection("conditions", [(record.id, record.to_dict()) for record in conditions])
    store.replace_collection("webpages", [(page.id, page.to_dict()) for page in webpages])
    store.replace_collection("exercises", [(exercise.id, exercise.to_dict()) for exercise in exercises])
    store.replace_collection("medications", [(record.name, record.to_dict()) for record in medications])

    return KnowledgeBase(
        conditions=conditions,
        webpages=webpages,
        exercises=exercises,
        medications=medications,
        store=store,
    )
