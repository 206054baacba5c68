"""Bag-of-words and TF-IDF encodings over a fitted vocabulary."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .text import Vocabulary

NORMS = ("none", "l1", "l2")


@dataclass(frozen=True)
class SparseVector:
    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        keep = val != 0
        idx, val = idx[keep], val[keep]
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dim):
            raise ValueError("indices must be strictly increasing and inside the dimension")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dict(cls, dim: int, entries: dict[int, float]) -> SparseVector:
        keys = sorted(entries)
        return cls(dim, np.array(keys, dtype=np.int64), np.array([entries[k] for k in keys], dtype=np.float64))

    @classmethod
    def from_dense(cls, dense) -> SparseVector:
        dense = np.asarray(dense, dtype=np.float64)
        nz = np.flatnonzero(dense)
        return cls(dense.size, nz, dense[nz])

    def to_dict(self) -> dict[int, float]:
        return {int(i): float(v) for i, v in zip(self.indices, self.values)}

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return int(self.indices.size)


def stack(vectors: Sequence[SparseVector], dim: int | None = None) -> sp.csr_matrix:
    if dim is None:
        dims = {v.dim for v in vectors}
        if len(dims) > 1:
            raise ValueError(f"mixed vector dimensions {sorted(dims)}")
        dim = dims.pop() if dims else 0
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([v.nnz for v in vectors])
    indices = np.concatenate([v.indices for v in vectors]) if vectors else np.zeros(0, np.int64)
    data = np.concatenate([v.values for v in vectors]) if vectors else np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


def normalize(vec: SparseVector, norm: str) -> SparseVector:
    norm = canonical_norm(norm)
    if norm == "none" or vec.nnz == 0:
        return vec
    scale = np.abs(vec.values).sum() if norm == "l1" else math.sqrt(float(vec.values @ vec.values))
    return SparseVector(vec.dim, vec.indices, vec.values / scale)


def canonical_norm(norm: str | None) -> str:
    key = "none" if norm is None else str(norm).lower()
    aliases = {"none": "none", "1": "l1", "l1": "l1", "2": "l2", "l2": "l2"}
    if key not in aliases:
        raise ValueError(f"unknown norm {norm!r}")
    return aliases[key]


def encode_count_bow(tokens: Iterable[str], vocab: Vocabulary) -> SparseVector:
    ids = np.array(vocab.ids(tokens), dtype=np.int64)
    if ids.size == 0:
        return SparseVector(len(vocab), ids, np.zeros(0))
    uniq, counts = np.unique(ids, return_counts=True)
    return SparseVector(len(vocab), uniq, counts.astype(np.float64))


def encode_binary_bow(tokens: Iterable[str], vocab: Vocabulary) -> SparseVector:
    c = encode_count_bow(tokens, vocab)
    return SparseVector(c.dim, c.indices, np.ones_like(c.values))


def count_matrix(documents: Sequence[Sequence[str]], vocab: Vocabulary) -> sp.csr_matrix:
    return stack([encode_count_bow(d, vocab) for d in documents], len(vocab))


# ---------------------------------------------------------------------------
# TF-IDF


@dataclass(frozen=True)
class IdfTable:
    weights: np.ndarray
    n_train: int
    vocab_digest: str = ""


def fit_idf(train_counts: sp.spmatrix | Sequence[SparseVector], vocab: Vocabulary | int) -> IdfTable:
    """Smoothed idf: ln((1 + N) / (1 + df)) + 1, fitted on training documents only."""
    dim = vocab if isinstance(vocab, int) else len(vocab)
    if not sp.issparse(train_counts):
        train_counts = stack(list(train_counts), dim)
    n = train_counts.shape[0]
    if n == 0:
        raise ValueError("cannot fit idf on zero documents")
    df = np.asarray((train_counts > 0).sum(axis=0)).ravel()
    weights = np.log((1.0 + n) / (1.0 + df)) + 1.0
    return IdfTable(weights, n, "" if isinstance(vocab, int) else vocab.digest())


def encode_tfidf(counts: SparseVector, idf: IdfTable, norm: str = "none") -> SparseVector:
    raw = SparseVector(counts.dim, counts.indices, counts.values * idf.weights[counts.indices])
    return normalize(raw, norm)


def normalize_rows(X: sp.csr_matrix, norm: str) -> sp.csr_matrix:
    norm = canonical_norm(norm)
    if norm == "none":
        return X
    X = X.tocsr(copy=True).astype(np.float64)
    if norm == "l1":
        scale = np.asarray(abs(X).sum(axis=1)).ravel()
    else:
        scale = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    scale[scale == 0] = 1.0
    return sp.csr_matrix(sp.diags(1.0 / scale) @ X)


def tfidf_matrix(counts: sp.csr_matrix, idf: IdfTable, norm: str = "none") -> sp.csr_matrix:
    return normalize_rows(sp.csr_matrix(counts @ sp.diags(idf.weights)), norm)


def binary_matrix(counts: sp.csr_matrix) -> sp.csr_matrix:
    b = counts.tocsr(copy=True)
    b.data = np.ones_like(b.data)
    return b
