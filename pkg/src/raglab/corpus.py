"""Knowledge-base corpus handling: loading, tokenizing, chunking, sentence
splitting, multilingual document substitution, and corpus statistics.

All objects here are immutable after load and safe for concurrent reads.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

__all__ = [
    "Language",
    "Level",
    "Document",
    "Chunk",
    "SentenceUnit",
    "KnowledgeBase",
    "KBStats",
    "tokenize",
    "chunk_document",
    "split_sentences",
    "split_chunk_sentences",
    "load_knowledge_base",
    "load_translations",
    "kb_stats",
    "apply_multilingual_mix",
]


class Language(str, Enum):
    EN = "en"
    FR = "fr"
    DE = "de"


class Level(int, Enum):
    L3 = 3
    L4 = 4


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str
    language: Language
    level: Level


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    ordinal: int
    text: str
    token_count: int

    @property
    def chunk_id(self) -> str:
        return f"{self.doc_id}#{self.ordinal}"


@dataclass(frozen=True)
class SentenceUnit:
    doc_id: str
    chunk_ordinal: int
    sentence_ordinal: int
    text: str


@dataclass(frozen=True)
class KnowledgeBase:
    documents: tuple[Document, ...]
    level: Level
    source_path: str
    content_hash: str

    def __len__(self) -> int:
        return len(self.documents)

    def ids(self) -> list[str]:
        return [d.id for d in self.documents]


@dataclass(frozen=True)
class KBStats:
    article_count: int
    sentences_per_article_min: int
    sentences_per_article_max: int
    avg_sentences_per_article: float
    avg_words_per_article: float


# Fixed punctuation set. str.strip with an explicit character set keeps the
# tokenizer fast and byte-reproducible across platforms; full Unicode
# category lookups are neither needed for the corpora this handles nor cheap.
_PUNCT_CHARS = string.punctuation + "«»“”‘’‚„…–—·¡¿"
_PUNCT_SET = frozenset(_PUNCT_CHARS)


def tokenize(text: str) -> list[str]:
    """Split text on whitespace, then peel leading/trailing punctuation off
    each piece into tokens of their own (one token per punctuation char).

    Internal punctuation stays attached ("Pope's" is one token). Case is
    preserved so chunk boundaries never alter the text.
    """
    tokens: list[str] = []
    for piece in text.split():
        stripped = piece.lstrip(_PUNCT_CHARS)
        lead = len(piece) - len(stripped)
        core = stripped.rstrip(_PUNCT_CHARS)
        tokens.extend(piece[:lead])
        if core:
            tokens.append(core)
            tokens.extend(piece[lead + len(core):])
        # an all-punctuation piece is fully consumed by the lead loop
    return tokens


def _token_spans(text: str) -> list[tuple[str, bool]]:
    """Tokens paired with a glued-to-previous flag.

    Tokens carved out of the same whitespace-separated piece are glued to
    each other; the first token of a piece is not. Rendering a span list
    with a single space before every non-glued token reproduces the text
    with normalized whitespace.
    """
    spans: list[tuple[str, bool]] = []
    for piece in text.split():
        stripped = piece.lstrip(_PUNCT_CHARS)
        lead = len(piece) - len(stripped)
        core = stripped.rstrip(_PUNCT_CHARS)
        first = True
        for ch in piece[:lead]:
            spans.append((ch, not first))
            first = False
        if core:
            spans.append((core, not first))
            first = False
            for ch in piece[lead + len(core):]:
                spans.append((ch, True))
    return spans


def _render_spans(spans: list[tuple[str, bool]]) -> str:
    parts: list[str] = []
    for i, (token, glued) in enumerate(spans):
        if i > 0 and not glued:
            parts.append(" ")
        parts.append(token)
    return "".join(parts)


def is_word_token(token: str) -> bool:
    """True for tokens that count as words (anything that is not a lone
    punctuation character)."""
    return len(token) > 1 or token not in _PUNCT_SET


def chunk_document(doc: Document, chunk_size: int) -> list[Chunk]:
    """Cut a document's token stream into greedy fixed-size windows with no
    overlap. Only the final chunk may fall short of chunk_size.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    spans = _token_spans(doc.text)
    chunks: list[Chunk] = []
    for ordinal, start in enumerate(range(0, len(spans), chunk_size)):
        window = spans[start:start + chunk_size]
        chunks.append(
            Chunk(
                doc_id=doc.id,
                ordinal=ordinal,
                text=_render_spans(window),
                token_count=len(window),
            )
        )
    return chunks


# Period-bearing abbreviations that never end a sentence.
_ABBREVIATIONS = frozenset({"e.g.", "i.e.", "dr.", "mr.", "mrs.", "st.", "vs."})
_TERMINATOR_RE = re.compile(r"[.?!]")


def _word_ending_at(text: str, end: int) -> str:
    start = end
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start:end]


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence splitting.

    A split happens after '.', '?' or '!' when the terminator is followed by
    whitespace and an uppercase letter (or end of text), unless the word
    ending at the terminator is a known abbreviation. Idempotent on its own
    output; never yields empty sentences.
    """
    sentences: list[str] = []
    start = 0
    for match in _TERMINATOR_RE.finditer(text):
        pos = match.end()
        if pos < len(text):
            if not text[pos].isspace():
                continue
            rest = text[pos:].lstrip()
            if not rest or not rest[0].isupper():
                continue
        if _word_ending_at(text, pos).lower() in _ABBREVIATIONS:
            continue
        sentence = text[start:pos].strip()
        if sentence:
            sentences.append(sentence)
        start = pos
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def split_chunk_sentences(chunk: Chunk) -> list[SentenceUnit]:
    """Sentence units of one chunk, carrying enough ordering metadata to
    reconstruct original order."""
    return [
        SentenceUnit(
            doc_id=chunk.doc_id,
            chunk_ordinal=chunk.ordinal,
            sentence_ordinal=i,
            text=sentence,
        )
        for i, sentence in enumerate(split_sentences(chunk.text))
    ]


def _parse_document(record: dict, line_no: int) -> Document:
    for key in ("id", "title", "text", "language", "level"):
        if key not in record:
            raise ValueError(f"line {line_no}: missing field {key!r}")
    if not isinstance(record["text"], str) or not record["text"].strip():
        raise ValueError(f"line {line_no}: empty text for id {record['id']!r}")
    try:
        language = Language(record["language"])
    except ValueError:
        raise ValueError(
            f"line {line_no}: unknown language {record['language']!r}"
        ) from None
    try:
        level = Level(int(record["level"]))
    except (TypeError, ValueError):
        raise ValueError(f"line {line_no}: unknown level {record['level']!r}") from None
    return Document(
        id=str(record["id"]),
        title=str(record["title"]),
        text=record["text"],
        language=language,
        level=level,
    )


def _iter_jsonl(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {line_no}: malformed JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise ValueError(f"line {line_no}: record is not an object")
            yield line_no, record


def load_knowledge_base(path: str | Path, level: Level | int) -> KnowledgeBase:
    """Load a JSONL knowledge base, keeping only documents of the requested
    level. Duplicate ids and malformed records are rejected with the
    offending id or line number."""
    path = Path(path)
    level = Level(level)
    content = path.read_bytes()
    documents: list[Document] = []
    seen: set[str] = set()
    for line_no, record in _iter_jsonl(path):
        doc = _parse_document(record, line_no)
        if doc.level is not level:
            continue
        if doc.id in seen:
            raise ValueError(f"duplicate document id {doc.id!r}")
        seen.add(doc.id)
        documents.append(doc)
    if not documents:
        raise ValueError(f"empty knowledge base: {path} has no level-{level.value} documents")
    return KnowledgeBase(
        documents=tuple(documents),
        level=level,
        source_path=str(path),
        content_hash=hashlib.sha256(content).hexdigest(),
    )


def load_translations(path: str | Path) -> dict[str, dict[Language, Document]]:
    """Load a translations JSONL file (same schema as a knowledge base,
    keyed by the ids it translates) into id -> language -> Document."""
    translations: dict[str, dict[Language, Document]] = {}
    for line_no, record in _iter_jsonl(Path(path)):
        doc = _parse_document(record, line_no)
        if doc.language is Language.EN:
            raise ValueError(f"line {line_no}: translation for {doc.id!r} is English")
        translations.setdefault(doc.id, {})[doc.language] = doc
    return translations


def kb_stats(kb: KnowledgeBase) -> KBStats:
    """Per-article sentence and word statistics, computed with this module's
    split_sentences and tokenize. Words are tokens that are not lone
    punctuation characters."""
    if not kb.documents:
        raise ValueError("empty knowledge base")
    sentence_counts: list[int] = []
    word_total = 0
    for doc in kb.documents:
        sentence_counts.append(len(split_sentences(doc.text)))
        word_total += sum(1 for t in tokenize(doc.text) if is_word_token(t))
    n = len(kb.documents)
    return KBStats(
        article_count=n,
        sentences_per_article_min=min(sentence_counts),
        sentences_per_article_max=max(sentence_counts),
        avg_sentences_per_article=sum(sentence_counts) / n,
        avg_words_per_article=word_total / n,
    )


def apply_multilingual_mix(
    kb: KnowledgeBase,
    replacement_ratio: float,
    seed: int,
    translations: dict[str, dict[Language, Document]],
) -> KnowledgeBase:
    """Replace a seeded-random subset of documents with FR/DE translations.

    Exactly round(ratio * |kb|) documents are replaced (half-up rounding);
    the language is chosen uniformly per document among the translations
    available for its id. Deterministic for a fixed seed.
    """
    if not 0.0 <= replacement_ratio <= 1.0:
        raise ValueError("replacement_ratio must be in [0, 1]")
    count = int(math.floor(replacement_ratio * len(kb.documents) + 0.5))
    if count == 0:
        return kb
    rng = random.Random(seed)
    chosen = set(rng.sample(kb.ids(), count))
    missing = sorted(doc_id for doc_id in chosen if doc_id not in translations)
    if missing:
        raise ValueError(f"missing translations for ids: {', '.join(missing)}")
    replaced: list[Document] = []
    for doc in kb.documents:
        if doc.id not in chosen:
            replaced.append(doc)
            continue
        options = translations[doc.id]
        language = rng.choice(sorted(options, key=lambda lang: lang.value))
        translated = options[language]
        replaced.append(
            Document(
                id=doc.id,
                title=translated.title,
                text=translated.text,
                language=language,
                level=doc.level,
            )
        )
    return KnowledgeBase(
        documents=tuple(replaced),
        level=kb.level,
        source_path=kb.source_path,
        content_hash=kb.content_hash,
    )
