"""TF-IDF vectors and near-duplicate filtering by thresholded sparse A @ A.T.

The product is never materialised: rows are processed in blocks, each row's
similarities are accumulated into a dense scratch row of length N through
the transposed (column) index, and only entries at or above the threshold
are emitted before the scratch entries are reset.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .corpus import Dataset
from .errors import DataError
from .sparse import SparseMatrix

# Absorbs rounding in the accumulated dot products so that unit-norm duplicates
# (cosine 1 - 2**-52) still meet a threshold of exactly 1.0.
COSINE_SLACK = 1e-12
DEFAULT_THRESHOLD = 0.85
DEFAULT_BLOCK_ROWS = 1024


class EmptyVocabularyError(DataError):
    pass


@dataclass
class TfidfModel:
    vocabulary: dict[str, int]
    idf: np.ndarray
    norm: str = "l2"
    smoothing: bool = True

    def __post_init__(self):
        self.idf = np.asarray(self.idf, dtype=np.float64)
        if self.idf.shape != (len(self.vocabulary),):
            raise ValueError("idf length must equal vocabulary size")
        if self.norm != "l2":
            raise ValueError("only l2 normalisation is supported")

    @property
    def terms(self) -> list[str]:
        out = [""] * len(self.vocabulary)
        for term, col in self.vocabulary.items():
            out[col] = term
        return out


def fit_tfidf(docs: Sequence[Sequence[str]], min_df: int = 1) -> TfidfModel:
    """Smoothed idf: ``ln((1 + N) / (1 + df)) + 1``; columns in first-appearance order."""
    if len(docs) == 0:
        raise DataError("cannot fit TF-IDF on zero documents")
    if min_df < 1:
        raise DataError("min_df must be >= 1")
    df: dict[str, int] = {}
    for doc in docs:
        for term in dict.fromkeys(doc):
            df[term] = df.get(term, 0) + 1
    kept = [t for t, c in df.items() if c >= min_df]
    if not kept:
        raise EmptyVocabularyError("no term reaches min_df; corpus is empty after filtering")
    n = len(docs)
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in kept])
    return TfidfModel({t: i for i, t in enumerate(kept)}, idf)


def transform(model: TfidfModel, docs: Sequence[Sequence[str]]) -> SparseMatrix:
    vocab, idf = model.vocabulary, model.idf
    n = len(docs)
    indptr = np.zeros(n + 1, dtype=np.int64)
    cols, vals = [], []
    for i, doc in enumerate(docs):
        counts = Counter(vocab[t] for t in doc if t in vocab)
        if counts:
            c = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
            w = np.array([counts[k] for k in c], dtype=np.float64) * idf[c]
            w /= math.sqrt(float(np.dot(w, w)))
            cols.append(c)
            vals.append(w)
            indptr[i + 1] = indptr[i] + c.size
        else:
            indptr[i + 1] = indptr[i]
    indices = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    data = np.concatenate(vals) if vals else np.zeros(0)
    return SparseMatrix((n, len(vocab)), indptr, indices, data, check=False)


# --------------------------------------------------------------------------
# kernels


@numba.njit(cache=True)
def _accumulate_row(i, indptr, indices, data, t_indptr, t_indices, t_data, acc, touched):
    """Add row i's dot products with every later row into ``acc``; return #touched."""
    nt = 0
    for p in range(indptr[i], indptr[i + 1]):
        t = indices[p]
        v = data[p]
        lo = t_indptr[t]
        hi = t_indptr[t + 1]
        # first position in column t holding a row id > i
        a, b = lo, hi
        while a < b:
            mid = (a + b) // 2
            if t_indices[mid] <= i:
                a = mid + 1
            else:
                b = mid
        for r in range(a, hi):
            j = t_indices[r]
            if acc[j] == 0.0:
                touched[nt] = j
                nt += 1
            acc[j] += v * t_data[r]
            if acc[j] == 0.0:
                # exact cancellation: keep j registered so it is reset later
                acc[j] = 1e-300
    return nt


@numba.njit(cache=True)
def _pairs_block(start, stop, indptr, indices, data, t_indptr, t_indices, t_data, cutoff, acc, touched):
    cap = 1024
    out_i = np.empty(cap, np.int64)
    out_j = np.empty(cap, np.int64)
    out_v = np.empty(cap, np.float64)
    n_out = 0
    for i in range(start, stop):
        nt = _accumulate_row(i, indptr, indices, data, t_indptr, t_indices, t_data, acc, touched)
        row_begin = n_out
        for k in range(nt):
            j = touched[k]
            s = acc[j]
            acc[j] = 0.0
            if s >= cutoff:
                if n_out == cap:
                    cap *= 2
                    ni = np.empty(cap, np.int64)
                    nj = np.empty(cap, np.int64)
                    nv = np.empty(cap, np.float64)
                    ni[:n_out] = out_i[:n_out]
                    nj[:n_out] = out_j[:n_out]
                    nv[:n_out] = out_v[:n_out]
                    out_i, out_j, out_v = ni, nj, nv
                out_i[n_out] = i
                out_j[n_out] = j
                out_v[n_out] = s
                n_out += 1
        if n_out - row_begin > 1:
            order = np.argsort(out_j[row_begin:n_out])
            out_j[row_begin:n_out] = out_j[row_begin:n_out][order]
            out_v[row_begin:n_out] = out_v[row_begin:n_out][order]
    return out_i[:n_out], out_j[:n_out], out_v[:n_out]


@numba.njit(cache=True)
def _dedup_block(start, stop, indptr, indices, data, t_indptr, t_indices, t_data, cutoff,
                 acc, touched, dropped, kept_by, kept_cos):
    for i in range(start, stop):
        if dropped[i]:
            continue
        nt = _accumulate_row(i, indptr, indices, data, t_indptr, t_indices, t_data, acc, touched)
        for k in range(nt):
            j = touched[k]
            s = acc[j]
            acc[j] = 0.0
            if s >= cutoff and not dropped[j]:
                dropped[j] = True
                kept_by[j] = i
                kept_cos[j] = s


def _check_threshold(threshold):
    if not (0.0 < threshold <= 1.0):
        raise DataError(f"threshold must be in (0, 1], got {threshold}")


def _prepare(m: SparseMatrix):
    t = m.transpose()
    return (m.indptr, m.indices.astype(np.int64), m.data, t.indptr, t.indices.astype(np.int64), t.data)


def similar_pairs_arrays(m: SparseMatrix, threshold: float, block_rows: int = DEFAULT_BLOCK_ROWS):
    """Like :func:`similar_pairs` but returns ``(i, j, cosine)`` as three arrays."""
    _check_threshold(threshold)
    if block_rows < 1:
        raise DataError("block_rows must be >= 1")
    n = m.n_rows
    arrays = _prepare(m)
    acc = np.zeros(n)
    touched = np.empty(n, np.int64)
    parts = []
    for start in range(0, n, block_rows):
        parts.append(_pairs_block(start, min(n, start + block_rows), *arrays,
                                  threshold - COSINE_SLACK, acc, touched))
    if not parts:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    return tuple(np.concatenate(col) for col in zip(*parts))


def similar_pairs(m: SparseMatrix, threshold: float, block_rows: int = DEFAULT_BLOCK_ROWS):
    """All ``(i, j, cosine)`` with ``i < j`` and cosine >= threshold, ascending by (i, j).

    Rows must be l2-normalised (or zero).
    """
    i, j, v = similar_pairs_arrays(m, threshold, block_rows)
    return [(int(a), int(b), float(c)) for a, b, c in zip(i, j, v)]


@dataclass(frozen=True)
class Drop:
    dropped: str
    kept: str
    cosine: float

    def to_json(self) -> dict:
        return {"dropped": self.dropped, "kept": self.kept, "cosine": self.cosine}


def dedup_matrix(m: SparseMatrix, threshold: float, block_rows: int = DEFAULT_BLOCK_ROWS):
    """Greedy earliest-kept filter over matrix rows.

    Returns ``(keep_mask, kept_by, cosine)``; ``kept_by[j]`` is the first kept
    row that knocked out ``j`` (-1 for kept rows).
    """
    _check_threshold(threshold)
    if block_rows < 1:
        raise DataError("block_rows must be >= 1")
    n = m.n_rows
    arrays = _prepare(m)
    acc = np.zeros(n)
    touched = np.empty(n, np.int64)
    dropped = np.zeros(n, dtype=np.bool_)
    kept_by = np.full(n, -1, dtype=np.int64)
    kept_cos = np.zeros(n)
    for start in range(0, n, block_rows):
        _dedup_block(start, min(n, start + block_rows), *arrays, threshold - COSINE_SLACK,
                     acc, touched, dropped, kept_by, kept_cos)
    return ~dropped, kept_by, kept_cos


def dedup(dataset: Dataset, docs: Sequence[Sequence[str]], threshold: float = DEFAULT_THRESHOLD,
          block_rows: int = DEFAULT_BLOCK_ROWS, model: TfidfModel | None = None) -> tuple[Dataset, list[Drop]]:
    """Drop every record whose TF-IDF cosine to an earlier kept record reaches ``threshold``.

    ``docs`` are the preprocessed unigram token sequences aligned with
    ``dataset.records``. Records with no tokens are always kept. The TF-IDF
    model is fitted on ``docs`` unless one is given; a second pass with the
    same model drops nothing, while a re-fit shifts idf weights and may.
    """
    if len(docs) != len(dataset):
        raise DataError(f"{len(docs)} token sequences for {len(dataset)} records")
    _check_threshold(threshold)
    if len(dataset) == 0:
        return Dataset([], dataset.taxonomy), []
    if model is None:
        try:
            model = fit_tfidf(docs)
        except EmptyVocabularyError:
            return Dataset(list(dataset.records), dataset.taxonomy), []
    m = transform(model, docs)
    keep, kept_by, cos = dedup_matrix(m, threshold, block_rows)
    recs = dataset.records
    report = [Drop(recs[j].id, recs[kept_by[j]].id, float(cos[j])) for j in np.flatnonzero(~keep)]
    return dataset.subset(np.flatnonzero(keep).tolist()), report


def write_drop_report(report: Sequence[Drop], path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        for d in report:
            fh.write(json.dumps(d.to_json(), ensure_ascii=False) + "\n")


def read_drop_report(path) -> list[Drop]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            out.append(Drop(obj["dropped"], obj["kept"], float(obj["cosine"])))
    return out
