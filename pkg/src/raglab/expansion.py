"""LM-driven query expansion.

One short LM call turns a question into a handful of alternative search
phrases. LM list output is messy, so the parser accepts the formats models
actually produce (numbered lines, bullets, semicolon or comma runs),
deduplicates case-insensitively, and always keeps the original query as the
first expanded query. If the LM returns nothing usable, the original query
alone is the expansion: retrieval must never be worse off for having asked.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .providers import LanguageModel

__all__ = ["ExpansionResult", "expand_query", "parse_expansion_reply", "EXPANSION_PROMPT"]

EXPANSION_PROMPT = "List {n} short keyword phrases relevant to answering: {query}"

# leading enumeration/bullet markers: "1.", "2)", "-", "*", "•"
_MARKER_RE = re.compile(r"^\s*(?:\d+\s*[.):]|[-*•])\s*")


@dataclass(frozen=True)
class ExpansionResult:
    original_query: str
    expansions: tuple[str, ...]  # parsed phrases, original excluded
    queries: tuple[str, ...]  # original first, then expansions
    raw_reply: str


def _clean_item(item: str) -> str:
    item = _MARKER_RE.sub("", item.strip())
    return item.strip().strip('"').strip("'").strip()


def parse_expansion_reply(reply: str, limit: int) -> list[str]:
    """Extract up to `limit` phrases from an LM reply.

    Splits on newlines first; any line holding a semicolon or comma run is
    split again on those. Empty items vanish; duplicates are dropped
    case-insensitively, first occurrence wins.
    """
    if limit < 0:
        raise ValueError("limit must be >= 0")
    items: list[str] = []
    for line in reply.splitlines():
        line = _clean_item(line)
        if not line:
            continue
        if ";" in line:
            items.extend(_clean_item(p) for p in line.split(";"))
        elif "," in line:
            items.extend(_clean_item(p) for p in line.split(","))
        else:
            items.append(line)
    seen: set[str] = set()
    phrases: list[str] = []
    for item in items:
        if not item:
            continue
        key = item.lower()
        if key in seen:
            continue
        seen.add(key)
        phrases.append(item)
        if len(phrases) == limit:
            break
    return phrases


def expand_query(lm: LanguageModel, query: str, n: int = 5,
                 max_tokens: int = 64) -> ExpansionResult:
    """Ask the LM for n alternative phrasings and return them alongside the
    original. The original is always queries[0] and is never duplicated even
    when the LM parrots it back."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not query.strip():
        raise ValueError("query must be non-empty")
    prompt = EXPANSION_PROMPT.format(n=n, query=query)
    raw = lm.complete(prompt, max_tokens)
    phrases = parse_expansion_reply(raw, limit=n + 1)
    original_key = query.strip().lower()
    expansions = tuple(p for p in phrases if p.lower() != original_key)[:n]
    return ExpansionResult(
        original_query=query,
        expansions=expansions,
        queries=(query, *expansions),
        raw_reply=raw,
    )
