"""Exact inner-product vector index.

A deliberately simple design: vectors live in one float64 matrix and every
search is a full scan. Exactness is the point; the corpora this serves are
small enough that a brute-force scan is faster than the bookkeeping of an
approximate structure, and identical scores on every platform are worth far
more here than raw throughput.

Persistence is a single binary file:

    bytes 0..15   magic "raglab-vecidx\\x00\\x00\\x00"
    bytes 16..19  format version, uint32 little-endian
    bytes 20..23  vector dimension, uint32 LE
    bytes 24..31  item count, uint64 LE
    id table      item count entries of (uint32 LE byte length, UTF-8 bytes)
    vectors       count * dim float64 LE, row-major, insertion order
    payload       uint64 LE byte length, UTF-8 JSON (metadata per item)

Round-trips are bit-exact: save(load(save(x))) produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["VectorIndex", "SearchHit", "IndexFormatError"]

_MAGIC = b"raglab-vecidx\x00\x00\x00"
_VERSION = 1


class IndexFormatError(ValueError):
    """Raised when an index file is truncated, corrupt, or from an
    unsupported format version."""


class SearchHit:
    """One search result: item id, inner-product score, stored payload."""

    __slots__ = ("item_id", "score", "payload")

    def __init__(self, item_id: str, score: float, payload: dict):
        self.item_id = item_id
        self.score = score
        self.payload = payload

    def __repr__(self) -> str:
        return f"SearchHit({self.item_id!r}, {self.score:.6f})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SearchHit)
            and self.item_id == other.item_id
            and self.score == other.score
            and self.payload == other.payload
        )


class VectorIndex:
    """Append-only exact-search index over float64 vectors.

    Ids are unique strings; each item may carry a JSON-serializable payload
    dict. Scores are plain inner products (cosine similarity when both sides
    are unit-norm, which the providers in this package guarantee). Ties are
    broken by ascending item id so results are total-ordered and stable.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._ids: list[str] = []
        self._payloads: list[dict] = []
        self._id_to_row: dict[str, int] = {}
        self._matrix = np.empty((0, dim), dtype=np.float64)
        self._pending: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._id_to_row

    def ids(self) -> list[str]:
        return list(self._ids)

    def add(self, item_id: str, vector: np.ndarray, payload: dict | None = None) -> None:
        if item_id in self._id_to_row:
            raise ValueError(f"duplicate item id {item_id!r}")
        vec = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vec.shape != (self.dim,):
            raise ValueError(f"expected vector of dim {self.dim}, got shape {vec.shape}")
        self._id_to_row[item_id] = len(self._ids)
        self._ids.append(item_id)
        self._payloads.append(dict(payload or {}))
        self._pending.append(vec)

    def add_batch(self, item_ids: list[str], vectors: np.ndarray,
                  payloads: list[dict] | None = None) -> None:
        if payloads is not None and len(payloads) != len(item_ids):
            raise ValueError("payloads length must match item_ids")
        if len(vectors) != len(item_ids):
            raise ValueError("vectors length must match item_ids")
        for i, item_id in enumerate(item_ids):
            self.add(item_id, vectors[i], payloads[i] if payloads else None)

    def _flush(self) -> None:
        if self._pending:
            self._matrix = np.vstack([self._matrix, np.vstack(self._pending)])
            self._pending.clear()

    @property
    def matrix(self) -> np.ndarray:
        self._flush()
        return self._matrix

    def vector(self, item_id: str) -> np.ndarray:
        self._flush()
        return self._matrix[self._id_to_row[item_id]].copy()

    def payload(self, item_id: str) -> dict:
        return self._payloads[self._id_to_row[item_id]]

    def _top_k(self, scores: np.ndarray, k: int,
               restrict_rows: np.ndarray | None = None) -> list[SearchHit]:
        if restrict_rows is not None:
            candidate_rows = restrict_rows
            candidate_scores = scores[restrict_rows]
        else:
            candidate_rows = np.arange(len(self._ids))
            candidate_scores = scores
        k = min(k, len(candidate_rows))
        if k == 0:
            return []
        # order by (-score, item_id): lexsort keys are applied last-first
        ids_arr = np.array([self._ids[r] for r in candidate_rows])
        order = np.lexsort((ids_arr, -candidate_scores))[:k]
        return [
            SearchHit(
                item_id=str(ids_arr[j]),
                score=float(candidate_scores[j]),
                payload=self._payloads[int(candidate_rows[j])],
            )
            for j in order
        ]

    def search(self, query: np.ndarray, k: int,
               restrict_ids: list[str] | None = None) -> list[SearchHit]:
        """Top-k by inner product against one query vector. With
        restrict_ids, only those items compete."""
        if k < 0:
            raise ValueError("k must be >= 0")
        self._flush()
        if not self._ids or k == 0:
            return []
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        if q.shape != (self.dim,):
            raise ValueError(f"expected query of dim {self.dim}, got shape {q.shape}")
        scores = self._matrix @ q
        return self._top_k(scores, k, self._restrict_rows(restrict_ids))

    def search_multi(self, queries: np.ndarray, k: int,
                     restrict_ids: list[str] | None = None,
                     fusion: str = "max") -> list[SearchHit]:
        """Top-k against several query vectors at once.

        Per-item scores across queries are fused with elementwise max by
        default, so an item needs to match only one query well; "sum"
        rewards items that match many queries at once.
        """
        if fusion not in ("max", "sum"):
            raise ValueError(f"unknown fusion {fusion!r}")
        if k < 0:
            raise ValueError("k must be >= 0")
        self._flush()
        qs = np.asarray(queries, dtype=np.float64)
        if qs.ndim != 2 or qs.shape[1] != self.dim:
            raise ValueError(f"expected queries of shape (n, {self.dim}), got {qs.shape}")
        if not self._ids or k == 0 or len(qs) == 0:
            return []
        all_scores = self._matrix @ qs.T  # (items, queries)
        fused = all_scores.max(axis=1) if fusion == "max" else all_scores.sum(axis=1)
        return self._top_k(fused, k, self._restrict_rows(restrict_ids))

    def _restrict_rows(self, restrict_ids: list[str] | None) -> np.ndarray | None:
        if restrict_ids is None:
            return None
        rows = []
        for item_id in restrict_ids:
            row = self._id_to_row.get(item_id)
            if row is None:
                raise KeyError(f"unknown item id {item_id!r}")
            rows.append(row)
        return np.array(sorted(set(rows)), dtype=np.int64)

    def save(self, path: str | Path) -> None:
        self._flush()
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", _VERSION))
            fh.write(struct.pack("<I", self.dim))
            fh.write(struct.pack("<Q", len(self._ids)))
            for item_id in self._ids:
                raw = item_id.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(np.ascontiguousarray(self._matrix, dtype="<f8").tobytes())
            payload_raw = json.dumps(
                self._payloads, ensure_ascii=False, sort_keys=True,
                separators=(",", ":"),
            ).encode("utf-8")
            fh.write(struct.pack("<Q", len(payload_raw)))
            fh.write(payload_raw)

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        path = Path(path)
        data = path.read_bytes()
        view = memoryview(data)
        offset = 0

        def take(n: int) -> memoryview:
            nonlocal offset
            if offset + n > len(view):
                raise IndexFormatError(f"{path}: truncated at byte {offset}")
            piece = view[offset:offset + n]
            offset += n
            return piece

        if bytes(take(16)) != _MAGIC:
            raise IndexFormatError(f"{path}: bad magic, not a vector index file")
        (version,) = struct.unpack("<I", take(4))
        if version != _VERSION:
            raise IndexFormatError(f"{path}: unsupported format version {version}")
        (dim,) = struct.unpack("<I", take(4))
        (count,) = struct.unpack("<Q", take(8))
        index = cls(dim=int(dim))
        ids: list[str] = []
        for _ in range(count):
            (length,) = struct.unpack("<I", take(4))
            ids.append(bytes(take(length)).decode("utf-8"))
        matrix = np.frombuffer(take(count * dim * 8), dtype="<f8").reshape(count, dim)
        (payload_len,) = struct.unpack("<Q", take(8))
        payloads = json.loads(bytes(take(payload_len)).decode("utf-8"))
        if offset != len(view):
            raise IndexFormatError(f"{path}: {len(view) - offset} trailing bytes")
        if len(payloads) != count:
            raise IndexFormatError(f"{path}: payload count {len(payloads)} != {count}")
        index._ids = ids
        index._payloads = payloads
        index._id_to_row = {item_id: row for row, item_id in enumerate(ids)}
        if len(index._id_to_row) != count:
            raise IndexFormatError(f"{path}: duplicate ids in id table")
        index._matrix = np.array(matrix, dtype=np.float64)
        return index
