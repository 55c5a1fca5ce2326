"""Staged retrieval pipelines over a chunk index.

Four retrieval shapes share this module:

- baseline: the original query alone ranks chunks; top k become context.
- expanded: all active queries (original plus LM expansions) first cast a
  wide net with score fusion, keeping `filter_size` candidates; the
  original query alone then re-ranks those down to `k_docs`.
- focus: a sentence stage on top of either of the above. The surviving
  chunks are split into sentences, each sentence is embedded and ranked
  against the original query, and the top `n_sentences` sentences replace
  whole chunks as context.
- icl: instead of passages, retrieve worked examples (question/answer
  pairs) nearest to the query from an index over evaluation questions,
  never returning the question currently being answered.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, replace

from .corpus import KnowledgeBase, chunk_document, split_sentences
from .expansion import expand_query
from .index import SearchHit, VectorIndex
from .providers import Embedder, LanguageModel, stable_seed

__all__ = [
    "RetrievalPlan",
    "RetrievalOutcome",
    "ICLExample",
    "PlanExecution",
    "retrieve_baseline",
    "retrieve_expanded",
    "focus_mode",
    "retrieve_icl_examples",
    "build_chunk_index",
    "build_icl_index",
    "execute_plan",
]

logger = logging.getLogger(__name__)

_MODES = ("baseline", "expanded", "focus", "icl")


@dataclass(frozen=True)
class RetrievalPlan:
    """Knobs for one retrieval call, naming which shape runs and how wide
    each stage is."""

    mode: str = "baseline"
    k_docs: int = 2
    filter_size: int = 15
    n_sentences: int = 20
    icl_n: int = 1
    contrastive: bool = False
    expand_first: bool = False  # focus mode: run the expanded pipeline underneath

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {_MODES}")
        if self.k_docs < 1:
            raise ValueError("k_docs must be >= 1")
        if self.mode == "expanded" and self.filter_size < self.k_docs:
            raise ValueError("filter_size must be >= k_docs")
        if self.mode == "focus" and self.n_sentences < 1:
            raise ValueError("n_sentences must be >= 1 in focus mode")
        if self.mode == "icl" and self.icl_n < 1:
            raise ValueError("icl_n must be >= 1 in icl mode")


@dataclass(frozen=True)
class RetrievalOutcome:
    """Stage-by-stage record of one retrieval.

    preliminary_hits is None when the wide multi-query stage did not run
    (baseline mode); sentence_hits is None unless the focus stage ran.
    context_texts is what prompt assembly consumes: chunk texts in refined
    rank order, or sentence texts in rank order after focus.
    """

    query: str
    queries_used: tuple[str, ...]
    document_hits: tuple[SearchHit, ...]
    preliminary_hits: tuple[SearchHit, ...] | None = None
    sentence_hits: tuple[SearchHit, ...] | None = None
    context_texts: tuple[str, ...] = ()
    context_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class ICLExample:
    """One worked example for in-context prompting. incorrect_answer is
    populated only when the example fills a contrastive slot."""

    example_id: str
    question: str
    correct_answer: str
    incorrect_answer: str | None = None

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError("question must be non-empty")
        if not self.correct_answer.strip():
            raise ValueError("correct_answer must be non-empty")


def build_chunk_index(kb: KnowledgeBase, chunk_size: int, embedder: Embedder,
                      batch_size: int = 64) -> VectorIndex:
    """Chunk every document and embed the chunks into a fresh index.

    Payloads carry the chunk text plus enough metadata to trace a hit back
    to its article.
    """
    index = VectorIndex(dim=embedder.dim)
    ids: list[str] = []
    texts: list[str] = []
    payloads: list[dict] = []
    for doc in kb.documents:
        for chunk in chunk_document(doc, chunk_size):
            ids.append(chunk.chunk_id)
            texts.append(chunk.text)
            payloads.append({
                "text": chunk.text,
                "doc_id": chunk.doc_id,
                "ordinal": chunk.ordinal,
                "token_count": chunk.token_count,
                "language": doc.language.value,
            })
    for start in range(0, len(ids), batch_size):
        stop = start + batch_size
        index.add_batch(ids[start:stop], embedder.embed(texts[start:stop]),
                        payloads[start:stop])
    return index


def build_icl_index(records, embedder: Embedder) -> VectorIndex:
    """Index evaluation-set questions for example retrieval.

    Each record is a mapping with example_id, question, correct_answer, and
    incorrect_answers (possibly empty list). Questions are what get
    embedded; answers ride along in payloads.
    """
    index = VectorIndex(dim=embedder.dim)
    ids: list[str] = []
    questions: list[str] = []
    payloads: list[dict] = []
    for record in records:
        ids.append(str(record["example_id"]))
        questions.append(record["question"])
        payloads.append({
            "question": record["question"],
            "correct_answer": record["correct_answer"],
            "incorrect_answers": list(record.get("incorrect_answers", ())),
        })
    if ids:
        index.add_batch(ids, embedder.embed(questions), payloads)
    return index


def _check_query(query: str) -> None:
    if not query.strip():
        raise ValueError("query must be non-empty")


def _document_outcome(query: str, queries: tuple[str, ...],
                      documents: tuple[SearchHit, ...],
                      preliminary: tuple[SearchHit, ...] | None) -> RetrievalOutcome:
    return RetrievalOutcome(
        query=query,
        queries_used=queries,
        document_hits=documents,
        preliminary_hits=preliminary,
        context_texts=tuple(h.payload["text"] for h in documents),
        context_ids=tuple(h.item_id for h in documents),
    )


def retrieve_baseline(query: str, index: VectorIndex, embedder: Embedder,
                      k_docs: int) -> RetrievalOutcome:
    """Single-stage retrieval: the original query ranks every chunk and the
    top k become the context."""
    _check_query(query)
    if k_docs < 1:
        raise ValueError("k_docs must be >= 1")
    if len(index) == 0:
        raise ValueError("empty index")
    vec = embedder.embed([query])[0]
    documents = tuple(index.search(vec, k=k_docs))
    return _document_outcome(query, (query,), documents, preliminary=None)


def retrieve_expanded(query: str, expansions, index: VectorIndex,
                      embedder: Embedder, filter_size: int, k_docs: int,
                      fusion: str = "max") -> RetrievalOutcome:
    """Two-stage retrieval: fused multi-query wide fetch, then the original
    query alone re-ranks the candidate pool down to k_docs.

    The refine stage runs even with zero expansions, where it cannot change
    the ranking; one code path means the stage invariants hold everywhere.
    """
    _check_query(query)
    if not 1 <= k_docs <= filter_size:
        raise ValueError("need filter_size >= k_docs >= 1")
    if len(index) == 0:
        raise ValueError("empty index")
    queries = (query, *expansions)
    matrix = embedder.embed(list(queries))
    preliminary = tuple(index.search_multi(matrix, k=filter_size, fusion=fusion))
    documents = tuple(
        index.search(matrix[0], k=k_docs,
                     restrict_ids=[h.item_id for h in preliminary])
    )
    return _document_outcome(query, queries, documents, preliminary)


def focus_mode(query: str, base: RetrievalOutcome, embedder: Embedder,
               n_sentences: int) -> RetrievalOutcome:
    """Sentence stage: split the retrieved chunks into sentences, rank them
    against the query, and make the top n the context (most relevant
    first), replacing whole chunks."""
    _check_query(query)
    if n_sentences < 1:
        raise ValueError("n_sentences must be >= 1")
    sentence_ids: list[str] = []
    sentence_texts: list[str] = []
    sentence_payloads: list[dict] = []
    for hit in base.document_hits:
        for ordinal, sentence in enumerate(split_sentences(hit.payload["text"])):
            sentence_ids.append(f"{hit.item_id}@{ordinal}")
            sentence_texts.append(sentence)
            sentence_payloads.append({
                "text": sentence,
                "chunk_id": hit.item_id,
                "sentence_ordinal": ordinal,
            })
    if not sentence_ids:
        raise ValueError("no sentences in retrieved documents")
    # transient index: the candidate pool changes with every query
    sentence_index = VectorIndex(dim=embedder.dim)
    sentence_index.add_batch(sentence_ids, embedder.embed(sentence_texts),
                             sentence_payloads)
    vec = embedder.embed([query])[0]
    sentences = tuple(sentence_index.search(vec, k=n_sentences))
    return replace(
        base,
        sentence_hits=sentences,
        context_texts=tuple(h.payload["text"] for h in sentences),
        context_ids=tuple(h.item_id for h in sentences),
    )


def _pick_incorrect(payload: dict, example_id: str, rule: str, seed: int) -> str:
    incorrect = payload.get("incorrect_answers") or []
    if not incorrect:
        raise ValueError(
            f"example {example_id!r} has no stored incorrect answers for a contrastive slot"
        )
    if rule == "first":
        return incorrect[0]
    if rule == "seeded":
        rng = random.Random(stable_seed("icl-incorrect", seed, example_id))
        return rng.choice(incorrect)
    raise ValueError(f"unknown incorrect-answer rule {rule!r}")


def retrieve_icl_examples(query: str, icl_index: VectorIndex, embedder: Embedder,
                          icl_n: int, active_example_id: str | None,
                          contrastive: bool = False,
                          incorrect_rule: str = "first",
                          seed: int = 0) -> tuple[ICLExample, ...]:
    """Nearest worked examples to the query, in retrieval-rank order.

    The example whose id equals active_example_id is masked out, so an item
    can never see its own answer. Masking is by id, not text equality:
    near-duplicate questions with different ids are legitimate examples.
    If fewer than icl_n examples survive the mask, all survivors are
    returned and a warning is logged.
    """
    _check_query(query)
    if icl_n < 1:
        raise ValueError("icl_n must be >= 1")
    vec = embedder.embed([query])[0]
    # over-fetch by one so the mask cannot shrink a full result
    hits = icl_index.search(vec, k=icl_n + 1)
    hits = [h for h in hits if h.item_id != active_example_id][:icl_n]
    if len(hits) < icl_n:
        logger.warning(
            "requested %d examples but only %d available after masking %r",
            icl_n, len(hits), active_example_id,
        )
    examples = []
    for hit in hits:
        examples.append(ICLExample(
            example_id=hit.item_id,
            question=hit.payload["question"],
            correct_answer=hit.payload["correct_answer"],
            incorrect_answer=(
                _pick_incorrect(hit.payload, hit.item_id, incorrect_rule, seed)
                if contrastive else None
            ),
        ))
    return tuple(examples)


@dataclass(frozen=True)
class PlanExecution:
    """What one plan produced: a document/sentence outcome, or a set of
    worked examples, never both."""

    outcome: RetrievalOutcome | None
    icl_examples: tuple[ICLExample, ...] = ()


def execute_plan(query: str, plan: RetrievalPlan, *, embedder: Embedder,
                 chunk_index: VectorIndex | None = None,
                 icl_index: VectorIndex | None = None,
                 lm: LanguageModel | None = None,
                 active_example_id: str | None = None,
                 expansion_count: int = 5,
                 fusion: str = "max",
                 incorrect_rule: str = "first",
                 seed: int = 0) -> PlanExecution:
    """Dispatch one retrieval plan to the pipeline it names."""
    if plan.mode == "icl":
        if icl_index is None:
            raise ValueError("icl mode needs an icl_index")
        examples = retrieve_icl_examples(
            query, icl_index, embedder, plan.icl_n, active_example_id,
            contrastive=plan.contrastive, incorrect_rule=incorrect_rule,
            seed=seed,
        )
        return PlanExecution(outcome=None, icl_examples=examples)
    if chunk_index is None:
        raise ValueError(f"{plan.mode} mode needs a chunk_index")
    if plan.mode == "expanded" or (plan.mode == "focus" and plan.expand_first):
        if lm is None:
            raise ValueError("expanded retrieval needs a language model")
        expansions = expand_query(lm, query, n=expansion_count).expansions
        base = retrieve_expanded(query, expansions, chunk_index, embedder,
                                 plan.filter_size, plan.k_docs, fusion=fusion)
    else:
        base = retrieve_baseline(query, chunk_index, embedder, plan.k_docs)
    if plan.mode == "focus":
        return PlanExecution(outcome=focus_mode(query, base, embedder,
                                                plan.n_sentences))
    return PlanExecution(outcome=base)
