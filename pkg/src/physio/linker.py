"""Entity linking: free-text condition names and drug names to KB records.

Conditions resolve through a strict cascade (exact canonical, exact alias,
bidirectional substring); drug names resolve exact-first then by normalized
Levenshtein similarity.
"""

from __future__ import annotations

from dataclasses import dataclass

from .kb_store import KnowledgeBase, MedicationRecord, normalize_name

# Substring candidates shorter than this are ignored to avoid accidental hits.
MIN_SUBSTRING_LENGTH = 4

# A fuzzy drug-name match below this similarity is rejected.
FUZZY_ACCEPT_THRESHOLD = 0.80

METHOD_EXACT = "exact"
METHOD_ALIAS = "alias"
METHOD_SUBSTRING = "substring"
METHOD_NONE = "none"


@dataclass(frozen=True)
class LinkResult:
    condition_id: str | None
    method: str

    @property
    def matched(self) -> bool:
        return self.method != METHOD_NONE


def levenshtein(a: str, b: str) -> int:
    """Iterative two-row edit distance."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def normalized_similarity(a: str, b: str) -> float:
    """1 - levenshtein/max-length on normalized strings, in [0, 1]."""
    norm_a = normalize_name(a)
    norm_b = normalize_name(b)
    if not norm_a or not norm_b:
        raise ValueError("both strings must be non-empty after normalization")
    longest = max(len(norm_a), len(norm_b))
    return 1.0 - levenshtein(norm_a, norm_b) / longest


def link_condition(kb: KnowledgeBase, name: str) -> LinkResult:
    """Resolve a condition mention via exact > alias > substring.

    The first stage with at least one hit wins; within a stage ties break by
    shortest canonical name then ascending id.
    """
    query = normalize_name(name)
    if not query:
        raise ValueError("condition name must be non-empty after normalization")

    def pick(hits: list) -> str:
        best = min(hits, key=lambda record: (len(record.canonical_name), record.id))
        return best.id

    exact = [record for record in kb.conditions if record.canonical_name == query]
    if exact:
        return LinkResult(condition_id=pick(exact), method=METHOD_EXACT)

    alias = [record for record in kb.conditions if query in record.aliases]
    if alias:
        return LinkResult(condition_id=pick(alias), method=METHOD_ALIAS)

    substring = []
    for record in kb.conditions:
        candidates = (record.canonical_name, *record.aliases)
        if any(_substring_hit(query, candidate) for candidate in candidates):
            substring.append(record)
    if substring:
        return LinkResult(condition_id=pick(substring), method=METHOD_SUBSTRING)

    return LinkResult(condition_id=None, method=METHOD_NONE)


def _substring_hit(query: str, candidate: str) -> bool:
    if len(candidate) < MIN_SUBSTRING_LENGTH:
        return False
    return query in candidate or candidate in query


def link_medication(
    kb: KnowledgeBase, name: str, threshold: float = FUZZY_ACCEPT_THRESHOLD
) -> MedicationRecord | None:
    """Exact match first, then the most similar record at or above threshold."""
    query = normalize_name(name)
    if not query:
        raise ValueError("medication name must be non-empty after normalization")
    record = kb.find_medication_exact(query)
    if record is not None:
        return record
    best: MedicationRecord | None = None
    best_similarity = -1.0
    for candidate in kb.medications:
        similarity = normalized_similarity(query, candidate.name)
        if similarity > best_similarity or (similarity == best_similarity and candidate.name < best.name):
            best = candidate
            best_similarity = similarity
    if best is not None and best_similarity >= threshold:
        return best
    return None
