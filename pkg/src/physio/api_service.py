"""HTTP service: query endpoint, health endpoint, startup ingestion, static UI.

One process serves the JSON API and the built chat UI, so the demo is one
command plus one data directory.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .grounding import GroundedAnswer
from .kb_store import KnowledgeBase, load_knowledge_base
from .llm_gateway import CompletionBackend, MockBackend, RemoteBackend
from .pipeline import MAX_QUERY_CHARS, InvalidQueryError, PipelineConfig, PipelineError, handle_query

logger = logging.getLogger("physio.api")

DEFAULT_CONCURRENCY_LIMIT = 8

KB_FILES = ("conditions.jsonl", "webpages.jsonl", "exercises.jsonl", "medications.jsonl")


class QueryRequest(BaseModel):
    query: str


class ReferencePayload(BaseModel):
    url: str
    title: str
    snippet: str


class SentencePayload(BaseModel):
    text: str
    references: list[ReferencePayload]


class ExercisePayload(BaseModel):
    name: str
    video_url: str
    instructions: str | None = None


class MedicationPayload(BaseModel):
    name: str
    description: str
    url: str | None = None


class QueryResponse(BaseModel):
    answer: list[SentencePayload]
    exercises: list[ExercisePayload]
    medications: list[MedicationPayload]
    grounded: bool
    disclaimer: str
    cache_hit: bool


@dataclass
class ServiceState:
    kb: KnowledgeBase
    backend: CompletionBackend
    backend_kind: str
    config: PipelineConfig


def build_service(
    data_dir: str | Path,
    backend_kind: str = "mock",
    mock_script: str | Path | None = None,
    llm_url: str | None = None,
    llm_model: str | None = None,
    seed: int | None = None,
) -> ServiceState:
    """Load the knowledge base from a data directory and wire up a backend."""
    data_dir = Path(data_dir)
    paths = [data_dir / name for name in KB_FILES]
    kb = load_knowledge_base(*paths, store_path=data_dir / "physio.db")
    if backend_kind == "mock":
        script = Path(mock_script) if mock_script else data_dir / "mock_script.jsonl"
        backend: CompletionBackend = MockBackend.from_script(script)
    elif backend_kind == "remote":
        if not llm_url or not llm_model:
            raise ValueError("remote backend requires --llm-url and --llm-model")
        backend = RemoteBackend(base_url=llm_url, model=llm_model)
    else:
        raise ValueError(f"unknown backend kind: {backend_kind!r}")
    return ServiceState(kb=kb, backend=backend, backend_kind=backend_kind, config=PipelineConfig(rng_seed=seed))


def serialize_response(answer: GroundedAnswer, kb: KnowledgeBase, cache_hit: bool) -> dict:
    sentence_payloads = []
    for sentence in answer.sentences:
        references = []
        for reference in sentence.references:
            page = kb.webpage(reference.document_id)
            references.append(
                {
                    "url": reference.url,
                    "title": page.title if page is not None else "",
                    "snippet": reference.source_sentence,
                }
            )
        sentence_payloads.append({"text": sentence.text, "references": references})
    return {
        "answer": sentence_payloads,
        "exercises": [
            {"name": e.name, "video_url": e.video_url, "instructions": e.instructions} for e in answer.exercises
        ],
        "medications": [
            {"name": m.name, "description": m.description, "url": m.url} for m in answer.medications
        ],
        "grounded": answer.grounded,
        "disclaimer": answer.disclaimer,
        "cache_hit": cache_hit,
    }


def create_app(
    state: ServiceState | None,
    ui_dir: str | Path | None = None,
    concurrency_limit: int = DEFAULT_CONCURRENCY_LIMIT,
) -> FastAPI:
    """Build the FastAPI app; state may be attached later via app.state."""
    app = FastAPI(title="physio", docs_url=None, redoc_url=None)
    app.state.service = state
    # bounds in-flight gateway calls; excess requests queue on the semaphore
    app.state.limiter = threading.BoundedSemaphore(concurrency_limit)

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": "malformed request body"})

    @app.get("/api/health")
    def health() -> JSONResponse:
        service: ServiceState | None = app.state.service
        if service is None:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return JSONResponse(
            status_code=200,
            content={"status": "ok", "kb_counts": service.kb.counts(), "backend": service.backend_kind},
        )

    @app.post("/api/query", response_model=QueryResponse)
    def query(request: QueryRequest) -> dict:
        service: ServiceState | None = app.state.service
        if service is None:
            raise HTTPException(status_code=503, detail="knowledge base not loaded")
        trimmed = request.query.strip()
        if not trimmed or len(trimmed) > MAX_QUERY_CHARS:
            raise HTTPException(
                status_code=400, detail=f"query must be 1-{MAX_QUERY_CHARS} characters after trimming"
            )
        started = time.monotonic()
        try:
            with app.state.limiter:
                answer, trace = handle_query(trimmed, service.kb, service.backend, service.config)
        except InvalidQueryError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except PipelineError as exc:
            logger.error("generation failed: %s", exc)
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        elapsed_ms = (time.monotonic() - started) * 1000.0
        # raw completions are never logged, only the pipeline trace
        logger.info(
            "query handled in %.1f ms: %s", elapsed_ms, json.dumps(trace.to_dict(), ensure_ascii=False)
        )
        return serialize_response(answer, service.kb, cache_hit=trace.cache_hit)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
