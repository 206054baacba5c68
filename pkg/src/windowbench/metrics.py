"""AUROC by rank sums and percentile bootstrap intervals."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


def _counts(labels: np.ndarray) -> tuple[int, int]:
    n_pos = int(np.sum(labels == 1))
    return n_pos, labels.size - n_pos


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with ties counted one half, via mid-ranks."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(int)
    if s.size != y.size:
        raise MetricError(f"{s.size} scores but {y.size} labels")
    n_pos, n_neg = _counts(y)
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"AUROC undefined for a single class (n_pos={n_pos}, n_neg={n_neg})")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc_pairwise(scores, labels) -> float:
    """Quadratic reference: fraction of (pos, neg) pairs ordered correctly."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    p, n = s[y == 1], s[y == 0]
    diff = p[:, None] - n[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


def bootstrap_ci(
    scores,
    labels,
    B: int = 1000,
    level: float = 0.95,
    seed=0,
    max_retries: int = 10,
    min_usable: int = 20,
) -> tuple[float, float]:
    """Percentile interval of AUROC over ``B`` resamples of examples.

    A resample with one class is redrawn up to ``max_retries`` times, then
    skipped.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(int)
    n_pos, n_neg = _counts(y)
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"bootstrap needs both classes (n_pos={n_pos}, n_neg={n_neg})")
    rng = np.random.default_rng(seed)
    n = s.size
    stats = []
    skipped = 0
    for _ in range(B):
        for _attempt in range(max_retries + 1):
            idx = rng.integers(0, n, size=n)
            k = int(y[idx].sum())
            if 0 < k < n:
                stats.append(auroc(s[idx], y[idx]))
                break
        else:
            skipped += 1
    if len(stats) < min_usable:
        raise MetricError(f"only {len(stats)} usable bootstrap resamples ({skipped} skipped)")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(np.asarray(stats), [tail, 1.0 - tail])
    return float(lo), float(hi)
