"""Everything that touches a generative model lives here.

Four prompt templates (input validation, condition identification, grounded
answer generation, medication suggestion), a pluggable completion backend
(remote chat-completion endpoint or deterministic scripted mock), and strict
parsers for the model replies. No other module may construct prompts or read
completions.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import requests

from .kb_store import SourceDocument
from .text_index import tokenize

API_KEY_ENV = "PHYSIO_LLM_API_KEY"

# All calls are issued at temperature 0 to keep the only nondeterministic
# dependency as predictable as possible.
COMPLETION_TEMPERATURE = 0.0

_MAX_TOKENS = {
    "validation": 8,
    "condition_identification": 32,
    "answer_generation": 512,
    "medication_suggestion": 128,
    "direct": 512,
}

_TRAILING_PUNCTUATION = ".!?,;:"

MAX_CONDITION_TOKENS = 8


class LlmError(Exception):
    """Base class for model-interaction failures."""


class GatewayError(LlmError):
    """The backend itself failed (transport error, no matching mock rule)."""


class CompletionParseError(LlmError):
    """The model replied, but not in the contracted format."""


class IdentificationError(LlmError):
    """Condition identification produced an empty or over-long reply."""


class GenerationError(LlmError):
    """Answer generation produced an empty completion."""


class TemplateError(LlmError):
    """A template was rendered with a missing or unexpected placeholder."""


@dataclass(frozen=True)
class PromptTemplate:
    """A named template with placeholders substituted exactly once each.

    The first line doubles as a stable marker so the scripted mock backend can
    recognize which template produced a prompt.
    """

    name: str
    template_text: str
    placeholders: tuple[str, ...]

    @property
    def marker(self) -> str:
        return self.template_text.splitlines()[0]

    def render(self, **values: str) -> str:
        provided = set(values)
        required = set(self.placeholders)
        if provided != required:
            raise TemplateError(
                f"template {self.name!r} requires placeholders {sorted(required)}, got {sorted(provided)}"
            )
        rendered = self.template_text
        for placeholder in self.placeholders:
            token = "{" + placeholder + "}"
            if rendered.count(token) != 1:
                raise TemplateError(f"template {self.name!r} must contain {token} exactly once")
            rendered = rendered.replace(token, values[placeholder])
        return rendered


VALIDATION_TEMPLATE = PromptTemplate(
    name="validation",
    placeholders=("query",),
    template_text=(
        "You are the intake gate of a physiotherapy advice assistant.\n"
        "Decide whether the message below is written in English and concerns physiotherapy,\n"
        "physical rehabilitation, or a musculoskeletal complaint such as pain or an injury.\n"
        "Reply with exactly one word: True or False.\n"
        "\n"
        "Message: {query}"
    ),
)

CONDITION_IDENTIFICATION_TEMPLATE = PromptTemplate(
    name="condition_identification",
    placeholders=("query",),
    template_text=(
        "You name the physical condition a patient is describing.\n"
        "Reply with only the condition name, in lowercase, and nothing else.\n"
        "\n"
        "Message: I have sprained my ankle\n"
        "Condition: ankle sprain\n"
        "\n"
        "Message: My lower back has been hurting since I moved some furniture\n"
        "Condition: back pain\n"
        "\n"
        "Message: My shoulder aches whenever I raise my arm overhead\n"
        "Condition: shoulder pain\n"
        "\n"
        "Message: My knee swells up after I go running\n"
        "Condition: knee pain\n"
        "\n"
        "Message: {query}\n"
        "Condition:"
    ),
)

ANSWER_GENERATION_TEMPLATE = PromptTemplate(
    name="answer_generation",
    placeholders=("documents", "query"),
    template_text=(
        "You are a careful physiotherapy advisor.\n"
        "Answer the user's question using only the information contained in the source pages\n"
        "below. Write short, plain sentences.\n"
        "\n"
        "{documents}\n"
        "\n"
        "Question: {query}\n"
        "Answer:"
    ),
)

MEDICATION_SUGGESTION_TEMPLATE = PromptTemplate(
    name="medication_suggestion",
    placeholders=("query", "condition", "answer"),
    template_text=(
        "You suggest over-the-counter medication for symptom relief.\n"
        "Given the consultation below, respond only with a JSON array of strings, each a\n"
        "medication name. Respond with [] if nothing is appropriate.\n"
        "\n"
        "Question: {query}\n"
        "Condition: {condition}\n"
        "Answer: {answer}"
    ),
)

TEMPLATES: dict[str, PromptTemplate] = {
    template.name: template
    for template in (
        VALIDATION_TEMPLATE,
        CONDITION_IDENTIFICATION_TEMPLATE,
        ANSWER_GENERATION_TEMPLATE,
        MEDICATION_SUGGESTION_TEMPLATE,
    )
}

# Pseudo-template name for the ungrounded path where the raw user query is
# sent as the whole prompt. Valid in mock scripts, but has no template text.
DIRECT_PROMPT = "direct"


def _query_region(template_name: str, prompt: str) -> str:
    """The rendered user query inside a prompt produced by the named template.

    Mock rules match against this region, never against template scaffolding,
    so few-shot exemplar text cannot trigger a rule.
    """
    if template_name == "validation":
        return prompt.split("Message: ", 1)[1]
    if template_name == "condition_identification":
        # exemplars also carry "Message: "; the user query is the last one
        return prompt.rsplit("Message: ", 1)[1].rsplit("\nCondition:", 1)[0]
    if template_name == "answer_generation":
        return prompt.rsplit("Question: ", 1)[1].rsplit("\nAnswer:", 1)[0]
    if template_name == "medication_suggestion":
        return prompt.split("Question: ", 1)[1].split("\nCondition: ", 1)[0]
    return prompt


class CompletionBackend(Protocol):
    def complete(self, prompt_text: str, max_tokens: int, temperature: float) -> str: ...


@dataclass(frozen=True)
class MockRule:
    template: str
    query_substring: str
    completion: str


class MockBackend:
    """Deterministic scripted stand-in for the generative model.

    A rule matches when the prompt carries the named template's marker and the
    rendered query region contains the rule's substring; rules with template
    "direct" match marker-less prompts only. First matching rule wins. Keeps a
    call counter so tests can assert on cache behavior.
    """

    def __init__(self, rules: list[MockRule]):
        for rule in rules:
            if rule.template != DIRECT_PROMPT and rule.template not in TEMPLATES:
                raise ValueError(f"unknown template in mock rule: {rule.template!r}")
        self._rules = list(rules)
        self._lock = threading.Lock()
        self._call_count = 0

    @classmethod
    def from_script(cls, path: str | Path) -> MockBackend:
        rules = []
        with open(path, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from exc
                try:
                    rules.append(
                        MockRule(
                            template=record["template"],
                            query_substring=record["query_substring"],
                            completion=record["completion"],
                        )
                    )
                except KeyError as exc:
                    raise ValueError(f"{path}:{line_no}: missing field {exc}") from exc
        return cls(rules)

    @property
    def call_count(self) -> int:
        with self._lock:
            return self._call_count

    def complete(self, prompt_text: str, max_tokens: int, temperature: float) -> str:
        with self._lock:
            self._call_count += 1
        from_template = any(template.marker in prompt_text for template in TEMPLATES.values())
        for rule in self._rules:
            if rule.template == DIRECT_PROMPT:
                if not from_template and rule.query_substring in prompt_text:
                    return rule.completion
            elif TEMPLATES[rule.template].marker in prompt_text:
                if rule.query_substring in _query_region(rule.template, prompt_text):
                    return rule.completion
        raise GatewayError(f"no mock rule matches prompt starting {prompt_text[:60]!r}")


class RemoteBackend:
    """Generic chat-completion HTTP endpoint; no vendor-specific behavior."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None, timeout: float = 60.0):
        self.base_url = base_url
        self.model = model
        self.timeout = timeout
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not self._api_key:
            raise GatewayError(f"no API key: set the {API_KEY_ENV} environment variable")

    def complete(self, prompt_text: str, max_tokens: int, temperature: float) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        try:
            response = requests.post(
                self.base_url,
                json=payload,
                headers={"Authorization": f"Bearer {self._api_key}"},
                timeout=self.timeout,
            )
            response.raise_for_status()
            data = response.json()
            return str(data["choices"][0]["message"]["content"])
        except requests.RequestException as exc:
            raise GatewayError(f"chat-completion request failed: {exc}") from exc
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise GatewayError(f"malformed chat-completion response: {exc}") from exc


def _complete(backend: CompletionBackend, kind: str, prompt: str) -> str:
    return backend.complete(prompt, max_tokens=_MAX_TOKENS[kind], temperature=COMPLETION_TEMPERATURE)


def _excerpt(text: str, limit: int = 60) -> str:
    # keeps full completions out of error messages (and therefore out of logs)
    return repr(text if len(text) <= limit else text[:limit] + "...")


def parse_boolean(text: str) -> bool:
    """Accept true/false up to case, surrounding whitespace, one trailing mark."""
    cleaned = text.strip()
    if cleaned and cleaned[-1] in _TRAILING_PUNCTUATION:
        cleaned = cleaned[:-1]
    cleaned = cleaned.strip().lower()
    if cleaned == "true":
        return True
    if cleaned == "false":
        return False
    raise CompletionParseError(f"expected 'True' or 'False', got {_excerpt(text)}")


def parse_string_list(text: str) -> list[str]:
    """Parse a JSON array of strings, tolerating a markdown code fence."""
    cleaned = text.strip()
    if cleaned.startswith("```"):
        lines = cleaned.splitlines()
        if len(lines) >= 2 and lines[-1].strip() == "```":
            cleaned = "\n".join(lines[1:-1]).strip()
    try:
        parsed = json.loads(cleaned)
    except json.JSONDecodeError as exc:
        raise CompletionParseError(f"not valid JSON: {_excerpt(text)}") from exc
    if not isinstance(parsed, list):
        raise CompletionParseError(f"expected a JSON array, got {type(parsed).__name__}")
    items: list[str] = []
    for element in parsed:
        if not isinstance(element, str):
            raise CompletionParseError(f"array element is not a string: {_excerpt(str(element))}")
        items.append(element.strip().lower())
    return items


def validate_prompt(backend: CompletionBackend, query: str) -> bool:
    """True iff the model judges the query an English physiotherapy prompt."""
    if not query:
        raise ValueError("query must be non-empty")
    prompt = VALIDATION_TEMPLATE.render(query=query)
    return parse_boolean(_complete(backend, "validation", prompt))


def identify_condition(backend: CompletionBackend, query: str) -> str:
    """Few-shot condition extraction; reply cleaned and length-guarded."""
    prompt = CONDITION_IDENTIFICATION_TEMPLATE.render(query=query)
    reply = _complete(backend, "condition_identification", prompt)
    cleaned = reply.strip().lower().strip("\"'").strip()
    if not cleaned:
        raise IdentificationError("model returned an empty condition")
    if len(tokenize(cleaned)) > MAX_CONDITION_TOKENS:
        raise IdentificationError(f"condition reply too long ({cleaned[:40]!r}...)")
    return cleaned


def generate_answer(backend: CompletionBackend, query: str, documents: list[SourceDocument]) -> str:
    """Grounded answer over 1-5 retrieved source pages."""
    if not 1 <= len(documents) <= 5:
        raise ValueError(f"generate_answer requires 1-5 documents, got {len(documents)}")
    blocks = "\n\n".join(f"[{doc.title}] ({doc.url})\n{doc.body}" for doc in documents)
    prompt = ANSWER_GENERATION_TEMPLATE.render(documents=blocks, query=query)
    answer = _complete(backend, "answer_generation", prompt).strip()
    if not answer:
        raise GenerationError("model returned an empty answer")
    return answer


def answer_directly(backend: CompletionBackend, query: str) -> str:
    """Ungrounded fallback: the raw query is the whole prompt."""
    if not query:
        raise ValueError("query must be non-empty")
    answer = _complete(backend, "direct", query).strip()
    if not answer:
        raise GenerationError("model returned an empty answer")
    return answer


def suggest_medications(backend: CompletionBackend, query: str, condition: str, answer: str) -> list[str]:
    """Medication names as a parsed, lowercased list; may be empty."""
    if not (query and condition and answer):
        raise ValueError("query, condition and answer must all be non-empty")
    prompt = MEDICATION_SUGGESTION_TEMPLATE.render(query=query, condition=condition, answer=answer)
    return parse_string_list(_complete(backend, "medication_suggestion", prompt))
