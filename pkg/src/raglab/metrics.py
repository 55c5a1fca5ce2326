"""Answer-quality metrics: ROUGE-1/2/L F1, embedding cosine similarity,
a corpus-level distribution match score over divergence frontiers, and a
paired bootstrap significance test.

Scoring uses its own tokenization (lowercased alphanumeric runs), separate
from corpus tokenization: scoring wants "Cat." and "cat" identified, corpus
chunking must preserve text exactly. Everything here is deterministic under
fixed seeds; the clustering step is written with elementwise numpy ops so
results do not depend on BLAS threading.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .providers import Embedder

__all__ = [
    "score_tokens",
    "rouge_n",
    "rouge_l",
    "best_reference_score",
    "embedding_cosine_similarity",
    "kmeans_quantize",
    "mauve",
    "paired_bootstrap",
    "ItemScores",
    "MetricReport",
]

_SCORE_TOKEN_RE = re.compile(r"[a-z0-9]+")


def score_tokens(text: str) -> list[str]:
    """Lowercased alphanumeric runs; punctuation never scores."""
    return _SCORE_TOKEN_RE.findall(text.lower())


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(candidate: str, reference: str, n: int) -> float:
    """Clipped n-gram overlap F1 for n in {1, 2}. Zero when either side has
    no n-grams at all."""
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    cand = _ngram_counts(score_tokens(candidate), n)
    ref = _ngram_counts(score_tokens(reference), n)
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    if cand_total == 0 or ref_total == 0:
        return 0.0
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _f1(overlap / cand_total, overlap / ref_total)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0] * (len(b) + 1)
        for j, other in enumerate(b, start=1):
            if token == other:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """Longest-common-subsequence F1 over score tokens."""
    cand = score_tokens(candidate)
    ref = score_tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    return _f1(lcs / len(cand), lcs / len(ref))


def best_reference_score(metric, candidate: str, references) -> float:
    """Best score over a set of acceptable references: any one matching is
    enough.

    metric is a callable (candidate, reference) -> float, e.g. rouge_l or a
    partial of rouge_n.
    """
    references = list(references)
    if not references:
        raise ValueError("need at least one reference")
    return max(metric(candidate, reference) for reference in references)


def embedding_cosine_similarity(candidate: str, reference: str,
                                embedder: Embedder) -> float:
    """Cosine similarity of the two texts' embeddings."""
    if not candidate.strip() or not reference.strip():
        raise ValueError("both texts must be non-empty")
    vectors = embedder.embed([candidate, reference])
    a, b = vectors[0], vectors[1]
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)


def kmeans_quantize(points: np.ndarray, k: int, seed: int,
                    max_iterations: int = 100) -> np.ndarray:
    """Deterministic k-means labels for the rows of `points`.

    Seeded k-means++ initialization, then at most max_iterations of
    assign/update. All distance math is elementwise (no matrix products),
    so labels are reproducible regardless of BLAS configuration. Empty
    clusters keep their previous center. Ties in assignment go to the
    lowest center index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.RandomState(seed % (2**32))

    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[int(rng.randint(n))]
    closest_sq = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = float(closest_sq.sum())
        if total == 0.0:
            pick = int(rng.randint(n))
        else:
            pick = int(rng.choice(n, p=closest_sq / total))
        centers[c] = points[pick]
        np.minimum(closest_sq, np.sum((points - centers[c]) ** 2, axis=1),
                   out=closest_sq)

    labels = np.full(n, -1, dtype=np.int64)
    distances = np.empty((k, n), dtype=np.float64)
    for _ in range(max_iterations):
        for c in range(k):
            distances[c] = np.sum((points - centers[c]) ** 2, axis=1)
        new_labels = distances.argmin(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return labels


_LAMBDA_GRID_SIZE = 25


def _smoothed_histogram(labels: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    return (counts + 1.0) / (counts.sum() + k)


def _kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / q)))


def divergence_frontier(p: np.ndarray, q: np.ndarray,
                        scale_c: float) -> list[tuple[float, float]]:
    """Frontier points for mixtures of the two histograms over a uniform
    interior grid, plus the two exact endpoints."""
    points = [(0.0, 1.0), (1.0, 0.0)]
    for i in range(1, _LAMBDA_GRID_SIZE + 1):
        lam = i / (_LAMBDA_GRID_SIZE + 1)
        mixture = lam * p + (1.0 - lam) * q
        points.append((
            float(np.exp(-scale_c * _kl_divergence(q, mixture))),
            float(np.exp(-scale_c * _kl_divergence(p, mixture))),
        ))
    return points


def frontier_auc(points) -> float:
    """Area under the upper-right envelope of the frontier points."""
    ordered = sorted(points, key=lambda pt: (pt[0], -pt[1]))
    xs = np.array([pt[0] for pt in ordered])
    ys = np.array([pt[1] for pt in ordered])
    # monotonize: each point's y becomes the best y at or right of it,
    # making the curve non-increasing as the frontier requires
    envelope = np.maximum.accumulate(ys[::-1])[::-1]
    widths = xs[1:] - xs[:-1]
    return float(np.sum(widths * (envelope[1:] + envelope[:-1]) / 2.0))


def mauve(candidates, references, embedder: Embedder, k: int | None = None,
          scale_c: float = 5.0, seed: int = 0) -> float:
    """Corpus-level distribution similarity of candidate texts to reference
    texts, via quantized embeddings and the area under a divergence
    frontier. 1.0 means indistinguishable distributions; near 0 means
    disjoint.

    Order-insensitive by construction: only the multiset of texts matters.
    Meaningful at corpus level only; per-item values are deliberately not
    offered.
    """
    # canonical order makes the score a function of the multisets alone;
    # k-means++ seeding would otherwise leak input order into the labels
    candidates = sorted(candidates)
    references = sorted(references)
    smaller = min(len(candidates), len(references))
    if k is None:
        k = min(16, smaller // 2)
    if k < 1 or smaller < 2:
        raise ValueError("too few samples for a stable score")
    if smaller < k:
        raise ValueError(f"need at least k={k} texts on each side")
    cand_vecs = embedder.embed(candidates)
    ref_vecs = embedder.embed(references)
    joint = np.vstack([cand_vecs, ref_vecs])
    labels = kmeans_quantize(joint, k=k, seed=seed)
    q = _smoothed_histogram(labels[:len(candidates)], k)
    p = _smoothed_histogram(labels[len(candidates):], k)
    return frontier_auc(divergence_frontier(p, q, scale_c))


def paired_bootstrap(scores_a, scores_b, resamples: int = 10_000,
                     seed: int = 0) -> float:
    """Two-sided paired bootstrap p-value for the mean difference between
    two score vectors on the same items.

    Resamples item indices with replacement; the p-value is the doubled
    smaller tail of the resampled mean-difference distribution, with
    add-one smoothing so it is never exactly zero.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score vectors must be 1-d and equal length")
    n = len(a)
    if n < 2:
        raise ValueError("need at least 2 paired scores")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    diff = a - b
    rng = np.random.RandomState(seed % (2**32))
    count_le = 0
    count_ge = 0
    block = 2000
    done = 0
    while done < resamples:
        take = min(block, resamples - done)
        idx = rng.randint(0, n, size=(take, n))
        means = diff[idx].mean(axis=1)
        count_le += int(np.sum(means <= 0.0))
        count_ge += int(np.sum(means >= 0.0))
        done += take
    p_le = (count_le + 1) / (resamples + 1)
    p_ge = (count_ge + 1) / (resamples + 1)
    return min(1.0, 2.0 * min(p_le, p_ge))


@dataclass(frozen=True)
class ItemScores:
    """Per-item metric row."""

    item_id: str
    rouge_1: float
    rouge_2: float
    rouge_l: float
    ecs: float

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "rouge_1": round(self.rouge_1, 6),
            "rouge_2": round(self.rouge_2, 6),
            "rouge_l": round(self.rouge_l, 6),
            "ecs": round(self.ecs, 6),
        }


@dataclass(frozen=True)
class MetricReport:
    """Scores for one experiment run: per-item rows, corpus means, the
    corpus-level distribution score, and (after comparison against a
    baseline) significance p-values per metric."""

    per_item: tuple[ItemScores, ...]
    mean_rouge_1: float
    mean_rouge_2: float
    mean_rouge_l: float
    mean_ecs: float
    mauve_score: float | None = None
    significance: dict = field(default_factory=dict)

    @classmethod
    def from_items(cls, per_item, mauve_score: float | None = None,
                   significance: dict | None = None) -> "MetricReport":
        per_item = tuple(per_item)
        if not per_item:
            raise ValueError("need at least one scored item")
        n = len(per_item)
        return cls(
            per_item=per_item,
            mean_rouge_1=sum(i.rouge_1 for i in per_item) / n,
            mean_rouge_2=sum(i.rouge_2 for i in per_item) / n,
            mean_rouge_l=sum(i.rouge_l for i in per_item) / n,
            mean_ecs=sum(i.ecs for i in per_item) / n,
            mauve_score=mauve_score,
            significance=dict(significance or {}),
        )

    def metric_vector(self, metric: str) -> np.ndarray:
        """Per-item values of one metric, ordered by item_id, for paired
        tests."""
        rows = sorted(self.per_item, key=lambda r: r.item_id)
        return np.array([getattr(r, metric) for r in rows], dtype=np.float64)

    def to_dict(self) -> dict:
        # floats rounded for byte-stable serialized reports
        return {
            "per_item": [row.to_dict() for row in self.per_item],
            "corpus": {
                "rouge_1": round(self.mean_rouge_1, 6),
                "rouge_2": round(self.mean_rouge_2, 6),
                "rouge_l": round(self.mean_rouge_l, 6),
                "ecs": round(self.mean_ecs, 6),
                "mauve": (None if self.mauve_score is None
                          else round(self.mauve_score, 6)),
                "factscore": "unsupported",
            },
            "significance": {
                metric: round(p, 6) for metric, p in sorted(self.significance.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        rows = tuple(
            ItemScores(
                item_id=r["item_id"], rouge_1=r["rouge_1"], rouge_2=r["rouge_2"],
                rouge_l=r["rouge_l"], ecs=r["ecs"],
            )
            for r in data["per_item"]
        )
        # corpus means come from the payload verbatim: recomputing from the
        # rounded rows would drift
        corpus = data["corpus"]
        return cls(
            per_item=rows,
            mean_rouge_1=corpus["rouge_1"],
            mean_rouge_2=corpus["rouge_2"],
            mean_rouge_l=corpus["rouge_l"],
            mean_ecs=corpus["ecs"],
            mauve_score=corpus.get("mauve"),
            significance=dict(data.get("significance", {})),
        )
