"""Class-imbalance strategies: class weights, oversampling, undersampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

STRATEGIES = ("none", "class_weights", "oversample", "undersample")


@dataclass(frozen=True)
class ImbalancePlan:
    strategy: str = "none"
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown imbalance strategy {self.strategy!r}; expected one of {STRATEGIES}")


@dataclass(frozen=True)
class Rebalanced:
    X: object
    y: np.ndarray
    sample_weight: np.ndarray | None
    index: np.ndarray  # source row of every output row


def class_weights(y) -> np.ndarray:
    """Per-example weight n / (2 * n_c) for the example's class c."""
    y = np.asarray(y).astype(int)
    n = y.size
    n_pos = int(y.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"class weights need both classes (pos={n_pos}, neg={n_neg})")
    return np.where(y == 1, n / (2.0 * n_pos), n / (2.0 * n_neg))


def _take(X, idx):
    if sp.issparse(X):
        return sp.csr_matrix(X)[idx]
    if isinstance(X, np.ndarray):
        return X[idx]
    return [X[i] for i in idx]


def rebalance(X, y, plan: ImbalancePlan) -> Rebalanced:
    """Apply ``plan``; X may be a dense array, a sparse matrix or a list of documents."""
    y = np.asarray(y).astype(int)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if pos.size == 0 or neg.size == 0:
        raise ValueError(f"rebalancing needs both classes (pos={pos.size}, neg={neg.size})")
    if plan.strategy == "none":
        idx = np.arange(y.size)
        return Rebalanced(X, y, None, idx)
    if plan.strategy == "class_weights":
        return Rebalanced(X, y, class_weights(y), np.arange(y.size))
    rng = np.random.default_rng(plan.seed)
    minority, majority = (pos, neg) if pos.size <= neg.size else (neg, pos)
    if plan.strategy == "oversample":
        extra = rng.choice(minority, size=majority.size - minority.size, replace=True)
        idx = np.sort(np.concatenate([np.arange(y.size), extra]), kind="stable")
    else:
        keep = rng.choice(majority, size=minority.size, replace=False)
        idx = np.sort(np.concatenate([minority, keep]))
    return Rebalanced(_take(X, idx), y[idx], None, idx)
