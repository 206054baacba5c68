"""Window x encoder x model x task sweep producing a ResultsTable."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import lda as lda_mod
from .config import RunConfig, resolve
from .dataset import SOURCES, TASKS, Dataset
from .ehr import ObservationWindow
from .features import binary_matrix, canonical_norm, count_matrix, fit_idf, normalize_rows, tfidf_matrix
from .imbalance import ImbalancePlan, rebalance
from .linear import TrainingError, predict, train_lr, train_multitask_lr
from .metrics import MetricError, auroc, bootstrap_ci
from .neural import TaskData, predict_neural, train_avg_encoder, train_multitask_neural
from .results import EVAL_SPLITS, ResultRow, ResultsTable
from .structured import IcdMapper, build_feature_dictionary, load_gem_table, structured_matrix
from .text import VocabularyError, build_vocab

log = logging.getLogger(__name__)

MODES = ("independent", "multitask")
LR_ENCODERS = {"BOW": "bow", "BinaryBOW": "binary", "TFIDF": "tfidf", "LDA": "lda", "Structured": "structured"}
NEURAL_AGGREGATIONS = {(): "mean", ("Attention",): "attention", ("MaxPool",): "maxpool"}


class RosterError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    family: str  # "lr" | "neural"
    encoder: str = ""  # bow | binary | tfidf | lda | structured (lr only)
    norm: str = "none"
    penalty: str | None = None  # None: config default
    aggregation: str = "mean"  # neural only


def parse_model_id(model_id: str) -> ModelSpec:
    """Parse ids such as ``LR+TFIDF+norm=l2``, ``LR+BOW+penalty=l1``, ``Average+Attention``."""
    parts = model_id.split("+")
    head, rest = parts[0], parts[1:]
    if head == "Average":
        agg = NEURAL_AGGREGATIONS.get(tuple(rest))
        if agg is None:
            raise RosterError(f"unknown model id {model_id!r}")
        return ModelSpec(model_id, "neural", aggregation=agg)
    if head != "LR" or not rest or rest[0] not in LR_ENCODERS:
        raise RosterError(f"unknown model id {model_id!r}")
    encoder = LR_ENCODERS[rest[0]]
    norm, penalty = "none", None
    for opt in rest[1:]:
        key, _, val = opt.partition("=")
        if key == "norm" and encoder in ("bow", "binary", "tfidf"):
            try:
                norm = canonical_norm(None if val == "None" else val)
            except ValueError:
                raise RosterError(f"{model_id!r}: unknown norm {val!r}") from None
        elif key == "penalty" and val in ("none", "l1", "l2"):
            penalty = val
        else:
            raise RosterError(f"{model_id!r}: unsupported option {opt!r}")
    return ModelSpec(model_id, "lr", encoder, norm, penalty)


def validate(cfg: RunConfig) -> list[ModelSpec]:
    """Resolve the roster and check the sweep axes; raises before any training."""
    sw = cfg.sweep
    if not sw.roster:
        raise RosterError("empty model roster")
    if len(set(sw.roster)) != len(sw.roster):
        raise RosterError("duplicate model ids in roster")
    specs = [parse_model_id(m) for m in sw.roster]
    for name, values, allowed in (("tasks", sw.tasks, TASKS), ("modes", sw.modes, MODES), ("sources", sw.sources, SOURCES)):
        bad = [v for v in values if v not in allowed]
        if bad or not values or len(set(values)) != len(values):
            raise RosterError(f"sweep {name} must be distinct values from {allowed}, got {list(values)}")
    for w in sw.windows:
        ObservationWindow.parse(w)
    if "multitask" in sw.modes and len(sw.tasks) < 2:
        raise RosterError("multitask mode needs at least two tasks")
    for s in specs:
        if s.encoder == "structured" and any(src != "structured" for src in sw.sources):
            raise RosterError(f"{s.model_id} needs data source 'structured' only, sweep has {list(sw.sources)}")
    ImbalancePlan(sw.imbalance)
    return specs


def cell_seed(global_seed: int, *parts: str) -> int:
    h = hashlib.sha256("|".join([str(global_seed), *parts]).encode("utf-8")).hexdigest()
    return int(h[:8], 16)


# ---------------------------------------------------------------------------
# features for one (source, window) group


class GroupFeatures:
    """Lazily built encodings of every example for one data source and window."""

    def __init__(self, ds: Dataset, cfg: RunConfig, source: str, window: ObservationWindow, examples, icd: IcdMapper):
        self.ds, self.cfg, self.source, self.window, self.icd = ds, cfg, source, window, icd
        self.examples = examples
        self.train = np.array([e.split == "train" for e in examples])
        self._cache: dict = {}

    def _docs(self, source: str):
        key = ("docs", source)
        if key not in self._cache:
            self._cache[key] = [self.ds.document(e, self.window, source) for e in self.examples]
        return self._cache[key]

    def _vocab_counts(self, source: str):
        key = ("counts", source)
        if key not in self._cache:
            docs = self._docs(source)
            vocab = build_vocab(
                [d for d, t in zip(docs, self.train) if t], self.cfg.text.min_df, self.cfg.text.max_size
            )
            self._cache[key] = (vocab, count_matrix(docs, vocab))
        return self._cache[key]

    def structured(self) -> sp.csr_matrix:
        if "struct" not in self._cache:
            encs = [self.ds.encounters(e, self.window) for e in self.examples]
            train_encs = [enc for es, t in zip(encs, self.train) if t for enc in es]
            dictionary = build_feature_dictionary(train_encs, self.icd, self.ds.cohort.criteria.variable_blacklist)
            self._cache["struct_dict"] = dictionary
            self._cache["struct"] = structured_matrix(encs, dictionary, self.icd)
        return self._cache["struct"]

    def feature_space_hash(self, spec: ModelSpec) -> str:
        """Digest of the token vocabulary and/or structured dictionary a model is trained on."""
        parts = []
        if spec.encoder == "structured" or (spec.family == "lr" and self.source == "both"):
            self.structured()
            parts.append("\n".join(self._cache["struct_dict"].names))
        if spec.encoder != "structured":
            text_source = "notes" if spec.family == "lr" and self.source == "both" else self.source
            parts.append("\n".join(self._vocab_counts(text_source)[0].tokens))
        return hashlib.sha256("\n\n".join(parts).encode("utf-8")).hexdigest()[:16]

    def text_matrix(self, spec: ModelSpec) -> sp.csr_matrix:
        text_source = "notes" if self.source == "both" else self.source
        _, C = self._vocab_counts(text_source)
        key = ("text", spec.encoder, spec.norm)
        if key in self._cache:
            return self._cache[key]
        if spec.encoder == "bow":
            X = normalize_rows(C, spec.norm)
        elif spec.encoder == "binary":
            X = normalize_rows(binary_matrix(C), spec.norm)
        elif spec.encoder == "tfidf":
            X = tfidf_matrix(C, fit_idf(C[self.train], C.shape[1]), spec.norm)
        else:
            lc = self.cfg.lda
            seed = cell_seed(self.cfg.seed, "lda", self.source, self.window.label)
            model = lda_mod.lda_fit(C[self.train], lc.k, lc.alpha, lc.beta, lc.gibbs_iters, lc.burn_in, lc.thin, seed)
            X = sp.csr_matrix(lda_mod.lda_transform_matrix(model, C, lc.infer_iters, seed))
        self._cache[key] = X
        return X

    def lr_matrix(self, spec: ModelSpec) -> sp.csr_matrix:
        if spec.encoder == "structured":
            return self.structured()
        X = self.text_matrix(spec)
        if self.source == "both":
            X = sp.hstack([X, self.structured()], format="csr")
        return X

    def token_ids(self) -> tuple[list[np.ndarray], int]:
        if "ids" not in self._cache:
            vocab, _ = self._vocab_counts(self.source)
            ids = [np.array(vocab.ids(d), dtype=np.int64) for d in self._docs(self.source)]
            self._cache["ids"] = (ids, len(vocab))
        return self._cache["ids"]


# ---------------------------------------------------------------------------
# cells


def _score_rows(cfg, base: dict, scores: np.ndarray, labels: np.ndarray, seed: int, split_idx: int, wall_ms) -> ResultRow:
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    a = auroc(scores, labels)
    lo, hi = bootstrap_ci(scores, labels, cfg.sweep.bootstrap, cfg.sweep.ci_level, seed=[seed, split_idx])
    if not lo <= a <= hi:
        log.warning("event=ci_clamped cell=%s auroc=%r lo=%r hi=%r", base, a, lo, hi)
        lo, hi = min(lo, a), max(hi, a)
    return ResultRow(**base, auroc=a, ci_lo=lo, ci_hi=hi, n_pos=n_pos, n_neg=n_neg, converged=True, seed=seed,
                     wall_ms=wall_ms if cfg.sweep.record_timing else None)


def _failed_rows(base_by_split, labels_by_split, seed) -> list[ResultRow]:
    out = []
    for split, base in base_by_split.items():
        y = labels_by_split[split]
        out.append(ResultRow(**base, auroc=None, ci_lo=None, ci_hi=None, n_pos=int(y.sum()),
                             n_neg=int(y.size - y.sum()), converged=False, seed=seed))
    return out


def _run_cell(feats: GroupFeatures, spec: ModelSpec, mode: str, tasks: Sequence[str]):
    """Rows for one (model, mode) over ``tasks`` plus the fitted models keyed by task key."""
    cfg = feats.cfg
    examples = feats.examples
    task_of = np.array([e.task for e in examples])
    split_of = np.array([e.split for e in examples])
    y_all = np.array([e.label for e in examples], dtype=np.float64)
    key_tasks = tasks if mode == "independent" else ["+".join(tasks)]
    rows: list[ResultRow] = []
    models: dict = {}
    for kt in key_tasks:
        cell_tasks = [kt] if mode == "independent" else list(tasks)
        seed = cell_seed(cfg.seed, kt, mode, feats.source, spec.model_id, feats.window.label)
        base = {
            t: {s: dict(task=t, mode=mode, data_source=feats.source, model_id=spec.model_id,
                        window=feats.window.label, split=s) for s in EVAL_SPLITS}
            for t in cell_tasks
        }
        idx = {(t, s): np.flatnonzero((task_of == t) & (split_of == s)) for t in cell_tasks for s in ("train",) + EVAL_SPLITS}
        t0 = time.perf_counter()
        try:
            scores, models[kt] = _fit_and_score(feats, spec, mode, cell_tasks, idx, y_all, seed)
        except (TrainingError, MetricError, VocabularyError, FloatingPointError) as exc:
            log.warning("event=cell_failed model=%s task=%s mode=%s source=%s window=%s error=%r",
                        spec.model_id, kt, mode, feats.source, feats.window.label, str(exc))
            for t in cell_tasks:
                rows += _failed_rows(base[t], {s: y_all[idx[(t, s)]] for s in EVAL_SPLITS}, seed)
            continue
        wall_ms = int(round((time.perf_counter() - t0) * 1000))
        for t in cell_tasks:
            converged, by_split = scores[t]
            if not converged:
                rows += _failed_rows(base[t], {s: y_all[idx[(t, s)]] for s in EVAL_SPLITS}, seed)
                continue
            for k, s in enumerate(EVAL_SPLITS):
                rows.append(_score_rows(cfg, base[t][s], by_split[s], y_all[idx[(t, s)]], seed, k, wall_ms))
    return rows, models


def _fit_and_score(feats: GroupFeatures, spec: ModelSpec, mode: str, tasks, idx, y_all, seed):
    """Train one cell; returns ({task: (converged, {split: scores})}, fitted model)."""
    cfg = feats.cfg
    plan = ImbalancePlan(cfg.sweep.imbalance, seed)
    for t in tasks:
        y_tr = y_all[idx[(t, "train")]]
        if y_tr.size == 0 or y_tr.min() == y_tr.max():
            raise TrainingError(f"task {t}: training labels hold a single class (n={y_tr.size})")
    out = {}
    if spec.family == "lr":
        X = feats.lr_matrix(spec)
        lc = cfg.linear
        penalty = spec.penalty or lc.penalty
        prepared = {}
        for t in tasks:
            tr = idx[(t, "train")]
            rb = rebalance(X[tr], y_all[tr], plan)
            prepared[t] = (rb.X, rb.y, rb.sample_weight)
        if mode == "independent":
            (t,) = tasks
            m = train_lr(*prepared[t][:2], penalty=penalty, lam=lc.lam, sample_weight=prepared[t][2],
                         max_iter=lc.max_iter, tol=lc.tol)
            out[t] = (m.converged, {s: predict(m, X[idx[(t, s)]]) for s in EVAL_SPLITS})
            return out, m
        else:
            mt = train_multitask_lr(prepared, lc.lam_shared, lc.lam_task, lc.max_iter, lc.tol)
            for t in tasks:
                m = mt.task_model(t)
                out[t] = (mt.converged, {s: predict(m, X[idx[(t, s)]]) for s in EVAL_SPLITS})
        return out, mt

    ids, vocab_size = feats.token_ids()
    data = {}
    for t in tasks:
        tr = idx[(t, "train")]
        rb = rebalance([ids[i] for i in tr], y_all[tr], plan)
        va = idx[(t, "validation")]
        data[t] = TaskData(rb.X, rb.y, [ids[i] for i in va], y_all[va], rb.sample_weight)
    embeddings = None
    if cfg.paths.embeddings:
        from .neural import load_embeddings

        vocab, _ = feats._vocab_counts(feats.source)
        embeddings = load_embeddings(resolve(cfg, cfg.paths.embeddings), vocab.tokens, cfg.neural.embed_dim)
    if mode == "independent":
        (t,) = tasks
        d = data[t]
        model = train_avg_encoder(d.train_docs, d.train_y, vocab_size, spec.aggregation, cfg.neural, seed,
                                  d.val_docs, d.val_y, d.sample_weight, task=t, embeddings=embeddings)
    else:
        model = train_multitask_neural(data, vocab_size, spec.aggregation, cfg.neural, seed, embeddings)
    for t in tasks:
        out[t] = (True, {s: predict_neural(model, [ids[i] for i in idx[(t, s)]], t) for s in EVAL_SPLITS})
    return out, model


# ---------------------------------------------------------------------------
# driver

_STATE: dict = {}


def _run_group(source: str, window_label: str) -> list[ResultRow]:
    ds: Dataset = _STATE["dataset"]
    cfg: RunConfig = _STATE["config"]
    specs: list[ModelSpec] = _STATE["specs"]
    window = ObservationWindow.parse(window_label)
    examples = [e for e in ds.examples if e.task in cfg.sweep.tasks]
    feats = GroupFeatures(ds, cfg, source, window, examples, _STATE["icd"])
    rows: list[ResultRow] = []
    for spec in specs:
        for mode in cfg.sweep.modes:
            rows += _run_cell(feats, spec, mode, list(cfg.sweep.tasks))[0]
    log.info("event=group_done source=%s window=%s rows=%d", source, window.label, len(rows))
    return rows


def _pos(seq) -> dict:
    return {v: i for i, v in enumerate(seq)}


def _order_key(cfg: RunConfig):
    sw = cfg.sweep
    pos = _pos
    tasks, modes, sources, models = pos(sw.tasks), pos(sw.modes), pos(sw.sources), pos(sw.roster)
    windows = pos(ObservationWindow.parse(w).label for w in sw.windows)
    splits = pos(EVAL_SPLITS)
    return lambda r: (tasks[r.task], modes[r.mode], sources[r.data_source], models[r.model_id], windows[r.window], splits[r.split])


def icd_mapper(cfg: RunConfig) -> IcdMapper:
    if cfg.paths.gem_table:
        return IcdMapper(load_gem_table(resolve(cfg, cfg.paths.gem_table)))
    default = resolve(cfg, cfg.paths.corpus) / "gem.csv"
    return IcdMapper(load_gem_table(default) if default.is_file() else {})


def run_sweep(cfg: RunConfig, ds: Dataset, jobs: int = 1, icd: IcdMapper | None = None) -> ResultsTable:
    """Train and score every (task, mode, source, model, window) cell.

    Work is grouped by (source, window) so encoders are fitted once per
    group. Rows are merged in configuration order, so the output does not
    depend on ``jobs``.
    """
    specs = validate(cfg)
    missing = [t for t in cfg.sweep.tasks if not ds.select(task=t)]
    if missing:
        raise RosterError(f"no cohort examples for task(s) {missing}")
    _STATE.update(dataset=ds, config=cfg, specs=specs, icd=icd or icd_mapper(cfg))
    windows = [ObservationWindow.parse(w).label for w in cfg.sweep.windows]
    groups = [(s, w) for s in cfg.sweep.sources for w in windows]
    if jobs > 1 and len(groups) > 1:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=min(jobs, len(groups)), mp_context=ctx) as pool:
            parts = list(pool.map(_run_group, *zip(*groups)))
    else:
        parts = [_run_group(s, w) for s, w in groups]
    rows = [r for part in parts for r in part]
    rows.sort(key=_order_key(cfg))
    table = ResultsTable(rows)
    expected = len(specs) * len(windows) * len(cfg.sweep.tasks) * len(cfg.sweep.modes) * len(cfg.sweep.sources) * len(EVAL_SPLITS)
    if len(table) != expected:
        raise AssertionError(f"sweep produced {len(table)} rows, expected {expected}")
    return table


def train_cell(cfg: RunConfig, ds: Dataset, model_id: str, mode: str, source: str, window: str,
               task: str | None = None, icd: IcdMapper | None = None):
    """Fit a single sweep cell.

    Independent mode needs ``task``; multitask mode trains on every task in
    ``cfg.sweep.tasks``. Returns (rows, model, seed, feature_space_hash);
    model is None when the cell failed.
    """
    # encoders see the same examples as in a full sweep, so the cell reproduces its sweep row
    group_tasks = cfg.sweep.tasks
    sw = dataclasses.replace(cfg.sweep, roster=(model_id,), modes=(mode,), sources=(source,), windows=(window,))
    if mode == "independent":
        if task is None:
            raise RosterError("independent training needs a task")
        sw = dataclasses.replace(sw, tasks=(task,))
    cfg = dataclasses.replace(cfg, sweep=sw)
    (spec,) = validate(cfg)
    examples = [e for e in ds.examples if e.task in group_tasks or e.task in sw.tasks]
    if not examples:
        raise RosterError(f"no cohort examples for task(s) {list(sw.tasks)}")
    feats = GroupFeatures(ds, cfg, source, ObservationWindow.parse(window), examples, icd or icd_mapper(cfg))
    rows, models = _run_cell(feats, spec, mode, list(sw.tasks))
    (key,) = list(sw.tasks) if mode == "independent" else ["+".join(sw.tasks)]
    seed = cell_seed(cfg.seed, key, mode, source, spec.model_id, feats.window.label)
    return ResultsTable(rows), models.get(key), seed, feats.feature_space_hash(spec)
