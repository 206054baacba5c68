"""Average encoder: embeddings -> ReLU projection -> mean / max / additive-attention pooling -> logistic head.

Plain numpy in float64 with hand-written gradients. Training is mini-batch
SGD with sparse embedding updates and early stopping on validation AUROC.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .linear import sigmoid
from .metrics import auroc

log = logging.getLogger(__name__)

AGGREGATIONS = ("mean", "maxpool", "attention")
SHARED_KEYS = ("E", "W_p", "b_p", "W_a", "b_a", "v")


@dataclass(frozen=True)
class NeuralConfig:
    embed_dim: int = 300
    hidden_dim: int = 256
    attn_dim: int = 128
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 3
    init_scale: float = 0.05
    max_len: int | None = None  # keep the last max_len tokens of a document


@dataclass
class NeuralAverageModel:
    params: dict[str, np.ndarray]
    aggregation: str
    tasks: tuple[str, ...]
    config: NeuralConfig = field(default_factory=NeuralConfig)
    seed: int = 0
    epochs_run: int = 0
    best_epoch: int = 0
    val_history: tuple[float, ...] = ()

    @property
    def vocab_size(self) -> int:
        return self.params["E"].shape[0]


def head_keys(task: str) -> tuple[str, str]:
    return f"head.{task}.w", f"head.{task}.b"


def init_params(
    vocab_size: int,
    cfg: NeuralConfig,
    aggregation: str,
    tasks: Sequence[str],
    rng: np.random.Generator,
    embeddings: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    D, H, A = cfg.embed_dim, cfg.hidden_dim, cfg.attn_dim
    p: dict[str, np.ndarray] = {}
    p["E"] = rng.uniform(-cfg.init_scale, cfg.init_scale, size=(vocab_size, D))
    if embeddings is not None:
        if embeddings.shape != (vocab_size, D):
            raise ValueError(f"pretrained embeddings have shape {embeddings.shape}, expected {(vocab_size, D)}")
        known = np.any(embeddings != 0, axis=1)
        p["E"][known] = embeddings[known]
    lim = np.sqrt(6.0 / (D + H))
    p["W_p"] = rng.uniform(-lim, lim, size=(H, D))
    p["b_p"] = np.zeros(H)
    if aggregation == "attention":
        lim = np.sqrt(6.0 / (H + A))
        p["W_a"] = rng.uniform(-lim, lim, size=(A, H))
        p["b_a"] = np.zeros(A)
        p["v"] = rng.uniform(-lim, lim, size=A)
    for t in sorted(tasks):
        wk, bk = head_keys(t)
        p[wk] = rng.uniform(-1.0 / np.sqrt(H), 1.0 / np.sqrt(H), size=H)
        p[bk] = np.zeros(1)
    return p


def load_embeddings(path: str | Path, vocab_tokens: Sequence[str], dim: int) -> np.ndarray:
    """Rows of a ``token<TAB>f1 ... f_dim`` file aligned to ``vocab_tokens``; missing tokens stay zero."""
    index = {t: i for i, t in enumerate(vocab_tokens)}
    out = np.zeros((len(vocab_tokens), dim))
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) == 2:
                parts = [parts[0]] + parts[1].split()
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected token and {dim} floats")
            i = index.get(parts[0])
            if i is not None:
                out[i] = np.array(parts[1:], dtype=np.float64)
    return out


# ---------------------------------------------------------------------------
# batches


@dataclass(frozen=True)
class Batch:
    n: int  # documents in the batch, empty ones included
    rows: np.ndarray  # batch row of each non-empty document
    starts: np.ndarray  # offset of each non-empty document in the position arrays
    lengths: np.ndarray
    seg: np.ndarray  # position -> non-empty document number
    uniq: np.ndarray  # unique token ids
    inv: np.ndarray  # position -> index into uniq
    scatter: sp.csr_matrix  # uniq x positions, sums position rows per unique token


def make_batch(docs: Sequence[np.ndarray], max_len: int | None = None) -> Batch:
    docs = [np.asarray(d, dtype=np.int64) for d in docs]
    if max_len is not None:
        docs = [d[-max_len:] if d.size > max_len else d for d in docs]
    lengths = np.array([d.size for d in docs], dtype=np.int64)
    rows = np.flatnonzero(lengths > 0)
    lens = lengths[rows]
    starts = np.zeros(rows.size, dtype=np.int64)
    if rows.size:
        starts[1:] = np.cumsum(lens)[:-1]
        tokens = np.concatenate([docs[r] for r in rows])
    else:
        tokens = np.zeros(0, dtype=np.int64)
    uniq, inv = np.unique(tokens, return_inverse=True)
    seg = np.repeat(np.arange(rows.size), lens)
    scatter = sp.csr_matrix((np.ones(tokens.size), (inv, np.arange(tokens.size))), shape=(uniq.size, tokens.size))
    return Batch(len(docs), rows, starts, lens, seg, uniq, inv, scatter)


# ---------------------------------------------------------------------------
# forward / backward


def _encode(params, batch: Batch, aggregation: str):
    """Aggregate vectors (n x H) plus the cache needed for the backward pass."""
    H = params["b_p"].size
    agg = np.zeros((batch.n, H))
    if batch.uniq.size == 0:
        return agg, None
    Eu = params["E"][batch.uniq]
    pre_u = Eu @ params["W_p"].T + params["b_p"]
    h_u = np.maximum(pre_u, 0.0)
    h = h_u[batch.inv]
    cache = {"Eu": Eu, "pre_u": pre_u, "h_u": h_u, "h": h}
    if aggregation == "mean":
        a = np.add.reduceat(h, batch.starts, axis=0) / batch.lengths[:, None]
    elif aggregation == "maxpool":
        a = np.maximum.reduceat(h, batch.starts, axis=0)
    else:
        u_u = np.tanh(h_u @ params["W_a"].T + params["b_a"])
        s = (u_u @ params["v"])[batch.inv]
        smax = np.maximum.reduceat(s, batch.starts)
        e = np.exp(s - smax[batch.seg])
        alpha = e / np.add.reduceat(e, batch.starts)[batch.seg]
        a = np.add.reduceat(alpha[:, None] * h, batch.starts, axis=0)
        cache.update(u_u=u_u, alpha=alpha)
    cache["a"] = a
    agg[batch.rows] = a
    return agg, cache


def attention_weights(model: NeuralAverageModel, doc) -> np.ndarray:
    """Attention weights over the tokens of one document (uniform for the other aggregations)."""
    b = make_batch([doc], model.config.max_len)
    if b.uniq.size == 0:
        return np.zeros(0)
    if model.aggregation != "attention":
        return np.full(b.lengths[0], 1.0 / b.lengths[0])
    return _encode(model.params, b, "attention")[1]["alpha"]


def _backward_shared(params, batch: Batch, aggregation: str, cache, d_agg: np.ndarray, grads: dict):
    """Accumulate shared-parameter gradients given dLoss/d(aggregate)."""
    if cache is None:
        return
    da = d_agg[batch.rows]
    h = cache["h"]
    if aggregation == "mean":
        dh = (da / batch.lengths[:, None])[batch.seg]
    elif aggregation == "maxpool":
        # route each column's gradient to the first position attaining the max
        pos = np.arange(h.shape[0])[:, None]
        hit = np.where(h == cache["a"][batch.seg], pos, h.shape[0])
        first = np.minimum.reduceat(hit, batch.starts, axis=0)
        dh = np.zeros_like(h)
        cols = np.broadcast_to(np.arange(h.shape[1]), first.shape)
        dh[first, cols] = da
    else:
        alpha = cache["alpha"]
        dh = alpha[:, None] * da[batch.seg]
        dalpha = np.einsum("ij,ij->i", h, da[batch.seg])
        weighted = np.add.reduceat(alpha * dalpha, batch.starts)
        ds = alpha * (dalpha - weighted[batch.seg])
        ds_u = batch.scatter @ ds
        u_u = cache["u_u"]
        grads["v"] += u_u.T @ ds_u
        dq_u = np.outer(ds_u, params["v"]) * (1.0 - u_u**2)
        grads["W_a"] += dq_u.T @ cache["h_u"]
        grads["b_a"] += dq_u.sum(axis=0)
        dh_u_attn = dq_u @ params["W_a"]
    dh_u = batch.scatter @ dh
    if aggregation == "attention":
        dh_u = dh_u + dh_u_attn
    dpre_u = dh_u * (cache["pre_u"] > 0)
    grads["W_p"] += dpre_u.T @ cache["Eu"]
    grads["b_p"] += dpre_u.sum(axis=0)
    grads["E_rows"].append(batch.uniq)
    grads["E_vals"].append(dpre_u @ params["W_p"])


def _zero_grads(params) -> dict:
    g = {k: np.zeros_like(v) for k, v in params.items() if k != "E"}
    g["E_rows"], g["E_vals"] = [], []
    return g


def _merge_embedding_grad(grads, E_shape):
    rows = grads.pop("E_rows")
    vals = grads.pop("E_vals")
    if not rows:
        return np.zeros(0, dtype=np.int64), np.zeros((0, E_shape[1]))
    r = np.concatenate(rows)
    v = np.concatenate(vals)
    uniq, inv = np.unique(r, return_inverse=True)
    out = np.zeros((uniq.size, E_shape[1]))
    np.add.at(out, inv, v)
    return uniq, out


def loss_and_grad(
    params: dict[str, np.ndarray],
    aggregation: str,
    task_batches: Mapping[str, tuple],
):
    """Summed task losses and gradients.

    ``task_batches`` maps task -> (Batch, y, sample_weight or None). Each task
    contributes the mean over its batch of weight * binary cross-entropy.
    The embedding gradient comes back as (rows, values) under ``"E"``.
    """
    grads = _zero_grads(params)
    total = 0.0
    for task, (batch, y, w) in task_batches.items():
        y = np.asarray(y, dtype=np.float64)
        w = np.ones(batch.n) if w is None else np.asarray(w, dtype=np.float64)
        agg, cache = _encode(params, batch, aggregation)
        wk, bk = head_keys(task)
        z = agg @ params[wk] + params[bk][0]
        total += float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) / batch.n)
        dz = w * (expit(z) - y) / batch.n
        grads[wk] += agg.T @ dz
        grads[bk] += dz.sum()
        _backward_shared(params, batch, aggregation, cache, np.outer(dz, params[wk]), grads)
    grads["E"] = _merge_embedding_grad(grads, params["E"].shape)
    return total, grads


def dense_grads(params, grads) -> dict[str, np.ndarray]:
    out = {k: v for k, v in grads.items() if k != "E"}
    rows, vals = grads["E"]
    E = np.zeros_like(params["E"])
    E[rows] = vals
    out["E"] = E
    return out


def loss_only(params, aggregation, task_batches) -> float:
    total = 0.0
    for task, (batch, y, w) in task_batches.items():
        y = np.asarray(y, dtype=np.float64)
        w = np.ones(batch.n) if w is None else np.asarray(w, dtype=np.float64)
        agg, _ = _encode(params, batch, aggregation)
        wk, bk = head_keys(task)
        z = agg @ params[wk] + params[bk][0]
        total += float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) / batch.n)
    return total


# ---------------------------------------------------------------------------
# prediction


def encode_documents(model: NeuralAverageModel, docs: Sequence[np.ndarray], chunk: int = 256) -> np.ndarray:
    out = []
    for i in range(0, len(docs), chunk):
        out.append(_encode(model.params, make_batch(docs[i : i + chunk], model.config.max_len), model.aggregation)[0])
    if not out:
        return np.zeros((0, model.params["b_p"].size))
    return np.vstack(out)


def predict_neural(model: NeuralAverageModel, docs: Sequence[np.ndarray], task: str | None = None) -> np.ndarray:
    task = model.tasks[0] if task is None else task
    if task not in model.tasks:
        raise KeyError(f"model has no head for task {task!r}")
    wk, bk = head_keys(task)
    return sigmoid(encode_documents(model, docs) @ model.params[wk] + model.params[bk][0])


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TaskData:
    train_docs: Sequence[np.ndarray]
    train_y: np.ndarray
    val_docs: Sequence[np.ndarray] = ()
    val_y: np.ndarray | None = None
    sample_weight: np.ndarray | None = None


def _sgd_step(params, grads, lr):
    rows, vals = grads["E"]
    if rows.size:
        params["E"][rows] -= lr * vals
    for k, g in grads.items():
        if k != "E":
            params[k] -= lr * g


def _validation_score(model: NeuralAverageModel, data: Mapping[str, TaskData]) -> float | None:
    scores = []
    for t in model.tasks:
        d = data[t]
        if d.val_y is None or len(d.val_docs) == 0:
            return None
        y = np.asarray(d.val_y)
        if y.min() == y.max():
            return None
        scores.append(auroc(predict_neural(model, d.val_docs, t), y))
    return float(np.mean(scores))


def _train(
    data: Mapping[str, TaskData],
    vocab_size: int,
    aggregation: str,
    cfg: NeuralConfig,
    seed,
    embeddings: np.ndarray | None = None,
) -> NeuralAverageModel:
    tasks = tuple(sorted(data))
    if not tasks:
        raise ValueError("no tasks given")
    for t in tasks:
        d = data[t]
        if len(d.train_docs) == 0:
            raise ValueError(f"task {t!r} has no training data")
        if len(d.train_docs) != len(d.train_y):
            raise ValueError(f"task {t!r}: {len(d.train_docs)} documents but {len(d.train_y)} labels")
    rng = np.random.default_rng(seed)
    params = init_params(vocab_size, cfg, aggregation, tasks, rng, embeddings)
    model = NeuralAverageModel(params, aggregation, tasks, cfg, seed if isinstance(seed, int) else 0)
    best = None
    best_score = -np.inf
    best_epoch = 0
    history = []
    stale = 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        queues = {}
        for t in tasks:
            order = rng.permutation(len(data[t].train_docs))
            queues[t] = [order[i : i + cfg.batch_size] for i in range(0, order.size, cfg.batch_size)]
        # round-robin over tasks, starting task drawn per epoch
        start = int(rng.integers(len(tasks)))
        cycle = tasks[start:] + tasks[:start]
        steps = []
        for i in range(max(len(q) for q in queues.values())):
            steps.extend((t, queues[t][i]) for t in cycle if i < len(queues[t]))
        for t, idx in steps:
            d = data[t]
            batch = make_batch([d.train_docs[j] for j in idx], cfg.max_len)
            w = None if d.sample_weight is None else np.asarray(d.sample_weight)[idx]
            loss, grads = loss_and_grad(params, aggregation, {t: (batch, np.asarray(d.train_y)[idx], w)})
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            _sgd_step(params, grads, cfg.lr)
        score = _validation_score(model, data)
        if score is None:
            continue
        history.append(score)
        log.debug("event=epoch epoch=%d val_auroc=%.6f", epoch, score)
        if score > best_score:
            best_score, best_epoch, stale = score, epoch, 0
            best = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best is not None:
        params.clear()
        params.update(best)
    return replace(model, epochs_run=epoch, best_epoch=best_epoch or epoch, val_history=tuple(history))


def train_avg_encoder(
    docs: Sequence[np.ndarray],
    y,
    vocab_size: int,
    aggregation: str = "mean",
    cfg: NeuralConfig | None = None,
    seed=0,
    val_docs: Sequence[np.ndarray] = (),
    val_y=None,
    sample_weight=None,
    task: str = "task",
    embeddings: np.ndarray | None = None,
) -> NeuralAverageModel:
    """Single-task Average encoder; ``docs`` are token-index arrays."""
    data = {task: TaskData(docs, np.asarray(y), val_docs, None if val_y is None else np.asarray(val_y), sample_weight)}
    return _train(data, vocab_size, aggregation, cfg or NeuralConfig(), seed, embeddings)


def train_multitask_neural(
    tasks: Mapping[str, TaskData],
    vocab_size: int,
    aggregation: str = "mean",
    cfg: NeuralConfig | None = None,
    seed=0,
    embeddings: np.ndarray | None = None,
) -> NeuralAverageModel:
    """Shared embeddings, projection and attention with one logistic head per task."""
    return _train(dict(tasks), vocab_size, aggregation, cfg or NeuralConfig(), seed, embeddings)
