"""Fast oracle and invariant checks runnable from an installed package (`windowbench selftest`)."""

from __future__ import annotations

import datetime as dt
from typing import Callable

import numpy as np

from . import gradcheck, linear, metrics, neural
from .ehr import Encounter, ObservationWindow, SurgeryEvent, assign_label
from .features import count_matrix, fit_idf, tfidf_matrix
from .imbalance import ImbalancePlan, class_weights, rebalance
from .lda import lda_fit, lda_transform_matrix
from .porter import stem
from .text import build_vocab

CheckResult = tuple[str, bool, str]


def _auroc_oracle() -> CheckResult:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 200))
        s = rng.integers(0, 12, size=n).astype(float)
        y = rng.integers(0, 2, size=n)
        y[:2] = (0, 1)
        worst = max(worst, abs(metrics.auroc(s, y) - metrics.auroc_pairwise(s, y)))
        if metrics.auroc(2 * s + 1, y) != metrics.auroc(s, y):
            return "auroc_oracle", False, "not invariant under 2x+1"
    return "auroc_oracle", worst <= 1e-12, f"max_gap={worst:.3g}"


def _tfidf_hand() -> CheckResult:
    docs = [["a", "b"], ["a"]]
    vocab = build_vocab(docs, min_df=1, reserved=())
    C = count_matrix(docs, vocab)
    idf = fit_idf(C, len(vocab))
    raw = tfidf_matrix(C, idf, "none").toarray()[0]
    l2 = tfidf_matrix(C, idf, "l2").toarray()[0]
    ia, ib = vocab.index["a"], vocab.index["b"]
    got = np.array([raw[ia], raw[ib], l2[ia], l2[ib]])
    # l2 values follow from the raw pair: (1, 1.405465) / hypot(1, 1.405465)
    want = np.array([1.0, 1.405465, 0.579739, 0.814802])
    gap = float(np.abs(got - want).max())
    return "tfidf_hand_oracle", gap <= 1e-5, f"max_gap={gap:.3g}"


def _lr_gradients() -> CheckResult:
    rng = np.random.default_rng(1)
    X = rng.normal(size=(12, 4))
    y = (rng.random(12) < 0.5).astype(float)
    y[:2] = (0, 1)
    s = rng.uniform(0.5, 2.0, size=12)
    e1 = gradcheck.check_vector(linear.lr_objective(X, y, s, "l2", 0.3), rng.normal(size=5))
    tasks = {"hip": (X[:6], y[:6], s[:6]), "knee": (X[6:], y[6:], s[6:])}
    mt, _, _ = linear.multitask_objective(tasks, 0.2, 0.5)
    e2 = gradcheck.check_vector(mt, rng.normal(size=4 + 2 * 5))
    worst = max(e1, e2)
    return "lr_gradients", worst <= 1e-5, f"max_rel_err={worst:.3g}"


def _neural_gradients() -> CheckResult:
    rng = np.random.default_rng(2)
    cfg = neural.NeuralConfig(embed_dim=8, hidden_dim=6, attn_dim=4, init_scale=0.5)
    docs = [rng.integers(0, 20, size=int(rng.integers(2, 7))) for _ in range(5)]
    y = np.array([0.0, 1.0, 1.0, 0.0, 1.0])
    worst = 0.0
    for agg in neural.AGGREGATIONS:
        params = neural.init_params(20, cfg, agg, ("hip", "knee"), np.random.default_rng(3))
        batches = {"hip": (neural.make_batch(docs[:3]), y[:3], np.ones(3)),
                   "knee": (neural.make_batch(docs[2:]), y[2:], np.ones(3))}
        gradcheck.nudge_off_kinks(params, batches)
        errs = gradcheck.grad_check(params, agg, batches)
        worst = max(worst, max(errs.values()))
    return "neural_gradients", worst <= 1e-5, f"max_rel_err={worst:.3g}"


def _l1_extremes() -> CheckResult:
    rng = np.random.default_rng(4)
    X = rng.normal(size=(40, 6))
    y = (X[:, 0] + rng.normal(size=40) > 0).astype(float)
    lmax = linear.l1_lambda_max(X, y)
    m = linear.train_lr(X, y, "l1", lmax * 1.0001)
    zero = bool(np.all(m.w == 0.0))
    return "l1_lambda_max", zero, f"lambda_max={lmax:.4g} nonzero={int(np.count_nonzero(m.w))}"


def _class_weight_identity() -> CheckResult:
    X = np.array([[0.5, -1.0], [1.5, 0.2], [-0.3, 0.8], [2.0, 1.0]])
    y = np.array([1.0, 0.0, 0.0, 0.0])
    theta = np.array([0.3, -0.7, 0.1])
    sw = class_weights(y)
    f_w = linear.lr_full_objective(theta, X, y, sw)
    dup = np.array([0, 0, 0, 1, 2, 3])
    f_d = linear.lr_full_objective(theta, X[dup], y[dup])
    ok = abs(f_w - f_d) <= 1e-12
    over = rebalance(X, y, ImbalancePlan("oversample", 0))
    ok &= int(over.y.sum()) == int((1 - over.y).sum())
    return "class_weight_identity", bool(ok), f"gap={abs(f_w - f_d):.3g}"


def _porter() -> CheckResult:
    vectors = {
        "caresses": "caress", "ponies": "poni", "ties": "ti", "cats": "cat", "feed": "feed",
        "agreed": "agre", "plastered": "plaster", "motoring": "motor", "sing": "sing",
        "conflated": "conflat", "troubled": "troubl", "sized": "size", "hopping": "hop",
        "falling": "fall", "filing": "file", "happy": "happi", "relational": "relat",
        "conditional": "condit", "rational": "ration", "digitizer": "digit",
        "operator": "oper", "generalization": "gener", "hopefulness": "hope",
        "electrical": "electr", "adjustment": "adjust", "controll": "control", "roll": "roll",
    }
    bad = [w for w, s in vectors.items() if stem(w) != s]
    return "porter_vectors", not bad, f"mismatches={bad}"


def _labels_windows() -> CheckResult:
    day0 = dt.date(2015, 6, 1)
    s = SurgeryEvent("P1", "E0", day0, "hip", 60)

    def enc(eid, offset, setting="inpatient"):
        d = day0 + dt.timedelta(days=offset)
        return Encounter(eid, "P1", d, d, setting)

    cases = {29: 1, 30: 1, 31: 0}
    ok = all(assign_label(s, [enc("E0", 0), enc("E9", k)]).value == v for k, v in cases.items())
    ok &= assign_label(s, [enc("E0", 0), enc("E9", 10, "outpatient")]).value == 0
    w3, w6 = ObservationWindow.parse("3"), ObservationWindow.parse("6")
    d90, d91 = day0 - dt.timedelta(days=90), day0 - dt.timedelta(days=91)
    ok &= w3.admits(d90, day0) and not w3.admits(d91, day0) and w6.admits(d91, day0)
    return "labels_and_windows", bool(ok), "day 29/30/31, outpatient, nesting"


def _lda_recovery() -> CheckResult:
    import scipy.sparse as sp

    rng = np.random.default_rng(5)
    rows = []
    for d in range(60):
        block = d % 2
        words = rng.integers(0, 10, size=40) + 10 * block
        rows.append(np.bincount(words, minlength=20))
    C = sp.csr_matrix(np.array(rows))
    model = lda_fit(C, 2, gibbs_iters=100, burn_in=50, thin=5, seed=0)
    mass = np.array([[model.phi[k, :10].sum(), model.phi[k, 10:].sum()] for k in range(2)])
    purity = max(mass[0, 0] + mass[1, 1], mass[0, 1] + mass[1, 0]) / 2
    theta = lda_transform_matrix(model, C, 20, 0)
    sums_ok = np.allclose(theta.sum(1), 1.0, atol=1e-9) and np.allclose(model.phi.sum(1), 1.0, atol=1e-9)
    return "lda_recovery", bool(purity >= 0.9 and sums_ok), f"purity={purity:.3f}"


CHECKS: tuple[Callable[[], CheckResult], ...] = (
    _auroc_oracle,
    _tfidf_hand,
    _lr_gradients,
    _neural_gradients,
    _l1_extremes,
    _class_weight_identity,
    _porter,
    _labels_windows,
    _lda_recovery,
)


def run_selftest() -> list[CheckResult]:
    out = []
    for check in CHECKS:
        try:
            out.append(check())
        except Exception as exc:  # a crashing check is a failed check
            out.append((check.__name__.lstrip("_"), False, f"error={exc!r}"))
    return out
