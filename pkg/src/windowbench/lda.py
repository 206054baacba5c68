"""Latent Dirichlet allocation fitted by collapsed Gibbs sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LdaModel:
    phi: np.ndarray  # K x V topic-word distributions
    alpha: float
    beta: float
    gibbs_iters: int
    seed: int

    @property
    def k(self) -> int:
        return self.phi.shape[0]


@njit(cache=True)
def _gibbs_sweep(docs, words, z, ndk, nkw, nk, alpha, beta, vbeta, u):
    K = nk.shape[0]
    p = np.empty(K)
    for i in range(words.shape[0]):
        d, w, k = docs[i], words[i], z[i]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        total = 0.0
        for t in range(K):
            total += (ndk[d, t] + alpha) * (nkw[t, w] + beta) / (nk[t] + vbeta)
            p[t] = total
        target = u[i] * total
        k = 0
        while k < K - 1 and p[k] <= target:
            k += 1
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


@njit(cache=True)
def _infer_sweep(words, z, nd, phi_t, alpha, u):
    K = nd.shape[0]
    p = np.empty(K)
    for i in range(words.shape[0]):
        w, k = words[i], z[i]
        nd[k] -= 1
        total = 0.0
        for t in range(K):
            total += (nd[t] + alpha) * phi_t[w, t]
            p[t] = total
        target = u[i] * total
        k = 0
        while k < K - 1 and p[k] <= target:
            k += 1
        z[i] = k
        nd[k] += 1


def _expand(counts: sp.csr_matrix):
    counts = sp.csr_matrix(counts)
    rows = np.repeat(np.arange(counts.shape[0]), np.diff(counts.indptr))
    reps = counts.data.astype(np.int64)
    if np.any(counts.data != reps) or np.any(reps < 0):
        raise ValueError("LDA needs non-negative integer counts")
    return np.repeat(rows, reps).astype(np.int64), np.repeat(counts.indices, reps).astype(np.int64)


def lda_fit(
    counts: sp.spmatrix,
    k: int,
    alpha: float | None = None,
    beta: float = 0.01,
    gibbs_iters: int = 500,
    burn_in: int = 200,
    thin: int = 10,
    seed: int = 0,
) -> LdaModel:
    """Fit topic-word distributions on a document x vocabulary count matrix.

    phi is averaged over the samples taken every ``thin`` sweeps after
    ``burn_in``; with no such sample the final state is used.
    """
    if k < 1:
        raise ValueError("need at least one topic")
    counts = sp.csr_matrix(counts)
    if counts.shape[0] == 0 or counts.nnz == 0:
        raise ValueError("LDA needs a non-empty count matrix")
    empty = int(np.sum(np.diff(counts.indptr) == 0))
    if empty:
        log.warning("event=lda_skip_empty docs=%d", empty)
    alpha = 50.0 / k if alpha is None else float(alpha)
    n_docs, n_words = counts.shape
    docs, words = _expand(counts)

    rng = np.random.default_rng(seed)
    z = rng.integers(0, k, size=words.size).astype(np.int64)
    ndk = np.zeros((n_docs, k), dtype=np.int64)
    nkw = np.zeros((k, n_words), dtype=np.int64)
    np.add.at(ndk, (docs, z), 1)
    np.add.at(nkw, (z, words), 1)
    nk = nkw.sum(axis=1)

    vbeta = n_words * beta
    phi_sum = np.zeros((k, n_words))
    samples = 0
    for it in range(1, gibbs_iters + 1):
        _gibbs_sweep(docs, words, z, ndk, nkw, nk, alpha, beta, vbeta, rng.random(words.size))
        if it > burn_in and (it - burn_in) % thin == 0:
            phi_sum += (nkw + beta) / (nk[:, None] + vbeta)
            samples += 1
    phi = phi_sum / samples if samples else (nkw + beta) / (nk[:, None] + vbeta)
    phi /= phi.sum(axis=1, keepdims=True)
    return LdaModel(phi, alpha, beta, gibbs_iters, seed)


def lda_transform(model: LdaModel, counts, infer_iters: int = 100, seed=0) -> np.ndarray:
    """Topic proportions for one document (count vector) with phi held fixed.

    Averages (n_dk + alpha) / (L + K alpha) over the second half of the
    sweeps. An empty document maps to the uniform distribution.
    """
    dense = counts.to_dense() if hasattr(counts, "to_dense") else np.asarray(counts).ravel()
    k = model.k
    reps = dense.astype(np.int64)
    if np.any(reps != dense):
        raise ValueError("LDA needs integer counts")
    words = np.repeat(np.arange(dense.size), reps).astype(np.int64)
    if words.size == 0:
        return np.full(k, 1.0 / k)
    rng = np.random.default_rng(seed)
    phi_t = np.ascontiguousarray(model.phi.T)
    z = rng.integers(0, k, size=words.size).astype(np.int64)
    nd = np.bincount(z, minlength=k).astype(np.int64)
    theta = np.zeros(k)
    kept = 0
    start = infer_iters // 2
    for it in range(infer_iters):
        _infer_sweep(words, z, nd, phi_t, model.alpha, rng.random(words.size))
        if it >= start:
            theta += (nd + model.alpha) / (words.size + k * model.alpha)
            kept += 1
    theta /= kept
    return theta / theta.sum()


def lda_transform_matrix(model: LdaModel, counts: sp.spmatrix, infer_iters: int = 100, seed: int = 0) -> np.ndarray:
    counts = sp.csr_matrix(counts)
    out = np.empty((counts.shape[0], model.k))
    for i in range(counts.shape[0]):
        row = np.zeros(counts.shape[1])
        lo, hi = counts.indptr[i], counts.indptr[i + 1]
        row[counts.indices[lo:hi]] = counts.data[lo:hi]
        out[i] = lda_transform(model, row, infer_iters, seed=[seed, i])
    return out
