"""Generation loops: fixed-context answering and the retrieval-stride loop
that refreshes the context partway through decoding.

A GenerationTrace is the audit record of one loop: every token the provider
produced, every retrieval (at which token position, with which context
ids), and the final text, which is always the exact concatenation of the
tokens. Traces serialize to JSON.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .index import VectorIndex
from .prompt import PromptBundle
from .providers import Embedder, LanguageModel
from .retrieval import retrieve_baseline

__all__ = [
    "StrideConfig",
    "RetrievalEvent",
    "GenerationTrace",
    "GenerationError",
    "compose_requery",
    "generate_fixed",
    "generate_with_stride",
    "stride_event_count",
]


@dataclass(frozen=True)
class StrideConfig:
    """How often to refresh context during generation.

    stride=None disables refreshing: the loop degenerates to fixed-context
    generation. requery_window is how many of the newest generated tokens
    join the original question in the refresh query.
    """

    stride: int | None = None
    requery_window: int = 32
    max_tokens: int = 64

    def __post_init__(self):
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1 or None")
        if self.requery_window < 1:
            raise ValueError("requery_window must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class RetrievalEvent:
    """One context refresh: the position of the next token to be generated
    and the context ids that will steer it."""

    position: int
    context_ids: tuple[str, ...]


@dataclass(frozen=True)
class GenerationTrace:
    tokens: tuple[str, ...]
    retrieval_events: tuple[RetrievalEvent, ...]
    final_text: str

    def __post_init__(self):
        if self.final_text != "".join(self.tokens):
            raise ValueError("final_text must equal the token concatenation")
        positions = [e.position for e in self.retrieval_events]
        if positions != sorted(set(positions)):
            raise ValueError("retrieval event positions must be strictly increasing")
        if positions and positions[0] != 0:
            raise ValueError("first retrieval event must be at position 0")

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "retrieval_events": [
                {"position": e.position, "context_ids": list(e.context_ids)}
                for e in self.retrieval_events
            ],
            "final_text": self.final_text,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationTrace":
        return cls(
            tokens=tuple(data["tokens"]),
            retrieval_events=tuple(
                RetrievalEvent(e["position"], tuple(e["context_ids"]))
                for e in data["retrieval_events"]
            ),
            final_text=data["final_text"],
        )


class GenerationError(RuntimeError):
    """Provider failure partway through a loop. Carries whatever was
    generated before the failure so long runs are not silently lost."""

    def __init__(self, message: str, partial: GenerationTrace):
        super().__init__(message)
        self.partial = partial


def stride_event_count(max_tokens: int, stride: int) -> int:
    """How many retrieval events a stride loop performs: one up front, then
    one before each later token whose position is a multiple of the
    stride."""
    if max_tokens < 1 or stride < 1:
        raise ValueError("max_tokens and stride must be >= 1")
    return 1 + (max_tokens - 1) // stride


def compose_requery(query: str, generated_tokens, window: int) -> str:
    """The refresh query: the original question followed by the newest
    `window` generated tokens, space-joined. Token whitespace is
    normalized, so provider tokens that carry leading spaces do not double
    up."""
    if window < 1:
        raise ValueError("window must be >= 1")
    words = [t.strip() for t in generated_tokens]
    words = [w for w in words if w][-window:]
    if not words:
        return query
    return f"{query} {' '.join(words)}"


def _stream_segment(lm: LanguageModel, prompt: str, budget: int,
                    tokens: list[str],
                    events: tuple[RetrievalEvent, ...]) -> None:
    """Append up to `budget` streamed tokens, wrapping provider failure
    with the partial trace accumulated so far."""
    try:
        for token in lm.stream(prompt, budget):
            tokens.append(token)
    except Exception as exc:
        partial = GenerationTrace(
            tokens=tuple(tokens),
            retrieval_events=events,
            final_text="".join(tokens),
        )
        raise GenerationError(
            f"provider failed after {len(tokens)} tokens: {exc}", partial
        ) from exc


def generate_fixed(bundle: PromptBundle, lm: LanguageModel, max_tokens: int,
                   context_ids=()) -> GenerationTrace:
    """One-shot generation with a fixed prompt.

    context_ids are the ids behind the bundle's context section; when the
    bundle was built without retrieval there is nothing to record and the
    trace carries zero events.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    context_ids = tuple(context_ids)
    events = (
        (RetrievalEvent(position=0, context_ids=context_ids),)
        if context_ids else ()
    )
    tokens: list[str] = []
    _stream_segment(lm, bundle.rendered, max_tokens, tokens, events)
    return GenerationTrace(
        tokens=tuple(tokens),
        retrieval_events=events,
        final_text="".join(tokens),
    )


def generate_with_stride(query: str, chunk_index: VectorIndex,
                         embedder: Embedder, k_docs: int,
                         stride_cfg: StrideConfig, lm: LanguageModel,
                         prompt_renderer: Callable[[tuple[str, ...]], PromptBundle],
                         ) -> GenerationTrace:
    """Generation with periodic context refresh.

    Retrieval runs once before the first token with the bare question, and
    again before every later token whose position is a positive multiple of
    the stride. Each refresh queries with the question plus the newest
    generated tokens, replaces the context wholesale, re-renders the prompt
    through prompt_renderer, and resumes decoding with the already-generated
    text appended to the prompt (generation never restarts).

    prompt_renderer maps context texts to the PromptBundle for this
    question, so the loop stays agnostic of prompt variants.
    """
    if not query.strip():
        raise ValueError("query must be non-empty")
    if k_docs < 1:
        raise ValueError("k_docs must be >= 1")
    if len(chunk_index) == 0:
        raise ValueError("empty index")

    max_tokens = stride_cfg.max_tokens
    stride = stride_cfg.stride

    outcome = retrieve_baseline(query, chunk_index, embedder, k_docs)
    events: list[RetrievalEvent] = [
        RetrievalEvent(position=0, context_ids=outcome.context_ids)
    ]
    bundle = prompt_renderer(outcome.context_texts)
    tokens: list[str] = []

    position = 0
    while position < max_tokens:
        if stride is None:
            boundary = max_tokens
        else:
            boundary = min(position + stride, max_tokens)
        prompt = bundle.rendered + "".join(tokens)
        _stream_segment(lm, prompt, boundary - position, tokens, tuple(events))
        position = boundary
        if position < max_tokens:
            requery = compose_requery(query, tokens, stride_cfg.requery_window)
            outcome = retrieve_baseline(requery, chunk_index, embedder, k_docs)
            events.append(RetrievalEvent(position=position,
                                         context_ids=outcome.context_ids))
            bundle = prompt_renderer(outcome.context_texts)

    return GenerationTrace(
        tokens=tuple(tokens),
        retrieval_events=tuple(events),
        final_text="".join(tokens),
    )
