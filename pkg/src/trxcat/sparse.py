"""Minimal CSR containers used by the TF-IDF and similarity code."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SparseVector:
    dims: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-D and equal length")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.dims or np.any(np.diff(idx) <= 0)):
            raise ValueError("indices must be strictly increasing and < dims")
        if np.any(val == 0):
            raise ValueError("explicit zeros are not stored")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    def dot(self, other: "SparseVector") -> float:
        common, a, b = np.intersect1d(self.indices, other.indices, assume_unique=True, return_indices=True)
        return float(np.dot(self.values[a], other.values[b])) if common.size else 0.0

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dims)
        out[self.indices] = self.values
        return out


class SparseMatrix:
    """Row-major compressed sparse matrix (float64 values)."""

    __slots__ = ("shape", "indptr", "indices", "data")

    def __init__(self, shape, indptr, indices, data, check=True):
        self.shape = (int(shape[0]), int(shape[1]))
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int32)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if check:
            self.check()

    @property
    def n_rows(self):
        return self.shape[0]

    @property
    def n_cols(self):
        return self.shape[1]

    @property
    def nnz(self):
        return int(self.indptr[-1])

    def check(self):
        n, m = self.shape
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0:
            raise ValueError("indptr must have n_rows + 1 entries starting at 0")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be non-decreasing")
        if self.indices.shape != self.data.shape or self.indices.size != self.indptr[-1]:
            raise ValueError("nnz mismatch between indptr, indices and data")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= m:
                raise ValueError("column index out of range")
            d = np.diff(self.indices.astype(np.int64))
            row_starts = self.indptr[1:-1]
            ok = np.ones(d.size, dtype=bool)
            # positions where a new row starts may decrease
            boundary = row_starts[(row_starts > 0) & (row_starts < self.indices.size)] - 1
            ok[boundary] = False
            if np.any(d[ok] <= 0):
                raise ValueError("column indices must be strictly increasing within a row")

    @classmethod
    def from_rows(cls, rows, n_cols) -> "SparseMatrix":
        """Build from per-row ``(indices, values)`` pairs (indices sorted)."""
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        for i, (idx, _) in enumerate(rows):
            indptr[i + 1] = indptr[i] + len(idx)
        indices = np.concatenate([np.asarray(r[0], dtype=np.int32) for r in rows]) if rows else np.zeros(0, np.int32)
        data = np.concatenate([np.asarray(r[1], dtype=np.float64) for r in rows]) if rows else np.zeros(0)
        return cls((len(rows), n_cols), indptr, indices, data)

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        rows = []
        for r in dense:
            nz = np.flatnonzero(r)
            rows.append((nz, r[nz]))
        return cls.from_rows(rows, dense.shape[1])

    def row(self, i) -> SparseVector:
        a, b = self.indptr[i], self.indptr[i + 1]
        return SparseVector(self.n_cols, self.indices[a:b], self.data[a:b])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        m = m.tocsr()
        m.sort_indices()
        return cls(m.shape, m.indptr, m.indices, m.data)

    def transpose(self) -> "SparseMatrix":
        """CSR of the transpose; row ids stay ascending within each column."""
        n, m = self.shape
        counts = np.bincount(self.indices, minlength=m)
        t_indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(counts, out=t_indptr[1:])
        order = np.argsort(self.indices, kind="stable")
        rows = np.repeat(np.arange(n, dtype=np.int32), np.diff(self.indptr))
        return SparseMatrix((m, n), t_indptr, rows[order], self.data[order], check=False)

    def take_rows(self, rows) -> "SparseMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        lengths = self.indptr[rows + 1] - self.indptr[rows]
        indptr = np.zeros(rows.size + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        if rows.size and indptr[-1]:
            pos = np.concatenate([np.arange(self.indptr[r], self.indptr[r + 1]) for r in rows])
        else:
            pos = np.zeros(0, dtype=np.int64)
        return SparseMatrix((rows.size, self.n_cols), indptr, self.indices[pos], self.data[pos], check=False)

    def row_norms(self) -> np.ndarray:
        sq = np.zeros(self.n_rows)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        np.add.at(sq, rows, self.data ** 2)
        return np.sqrt(sq)

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices) and np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"
