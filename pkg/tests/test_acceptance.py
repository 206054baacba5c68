"""Acceptance criteria 1-11; each test prints one PASS/FAIL line before asserting."""

import dataclasses
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import minimize as scipy_minimize

from builders import DAY0, corpus, encounter, note, patient
from windowbench import gradcheck, linear, metrics, neural
from windowbench.cli import main
from windowbench.config import load_config
from windowbench.dataset import prepare_dataset
from windowbench.ehr import ObservationWindow, SurgeryEvent, assign_label, build_cohort, identify_surgeries
from windowbench.ehr import load_corpus, slice_window, split_cohort
from windowbench.features import count_matrix, fit_idf, tfidf_matrix
from windowbench.imbalance import ImbalancePlan, class_weights, rebalance
from windowbench.lda import lda_fit, lda_transform_matrix
from windowbench.porter import stem
from windowbench.report import emit_report, pivot_text, read_pivots
from windowbench.results import ResultRow, ResultsTable
from windowbench.sweep import run_sweep
from windowbench.synth import generate
from windowbench.text import build_vocab

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture()
def verdict(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail

    return emit


def _sweep_config(name, tmp_path):
    cfg = load_config(ROOT / "configs" / f"{name}.toml")
    cfg = dataclasses.replace(cfg, paths=dataclasses.replace(cfg.paths, corpus=str(tmp_path / "corpus")))
    t0 = time.perf_counter()
    generate(cfg.synth, tmp_path / "corpus")
    ds = prepare_dataset(load_corpus(tmp_path / "corpus"), cfg.cohort.criteria(), cfg.split.ratios, cfg.seed,
                         cfg.split.stratify)
    table = run_sweep(cfg, ds, jobs=1)
    return cfg, table, time.perf_counter() - t0


def _test_auroc(table, task, model, window):
    return table.get(task, "independent", table.rows[0].data_source, model, window, "test").auroc


@pytest.mark.slow
def test_criterion_01_note_window_optimum(tmp_path, verdict):
    cfg, table, secs = _sweep_config("notes_window", tmp_path)
    bad = []
    for task in cfg.sweep.tasks:
        for model in cfg.sweep.roster:
            a0, a3, a36 = (_test_auroc(table, task, model, w) for w in ("0", "3", "36"))
            if not (a3 >= a0 + 0.05 and a3 >= a36):
                bad.append(f"{task}/{model} m0={a0:.3f} m3={a3:.3f} m36={a36:.3f}")
    ok = not bad and secs <= 300
    verdict(1, ok, f"models={len(cfg.sweep.roster)} tasks={len(cfg.sweep.tasks)} seconds={secs:.0f} violations={bad}")


@pytest.mark.slow
def test_criterion_02_structured_plateau(tmp_path, verdict):
    cfg, table, secs = _sweep_config("structured_plateau", tmp_path)
    bad = []
    for task in cfg.sweep.tasks:
        a = {w: _test_auroc(table, task, "LR+Structured", w) for w in ("0", "3", "6", "12", "36")}
        steps = [a["3"] - a["0"], a["6"] - a["3"], a["12"] - a["6"]]
        if min(steps) < -0.01 or abs(a["36"] - a["12"]) > 0.03:
            bad.append(f"{task} {a}")
    verdict(2, not bad and secs <= 180, f"seconds={secs:.0f} violations={bad}")


def test_criterion_03_auroc_oracle(verdict):
    rng = np.random.default_rng(20)
    worst, invariant = 0.0, True
    for _ in range(200):
        n = int(rng.integers(2, 501))
        s = rng.integers(0, max(2, n // 4), size=n).astype(float)  # ties included
        y = rng.integers(0, 2, size=n)
        y[:2] = (0, 1)
        fast = metrics.auroc(s, y)
        worst = max(worst, abs(fast - metrics.auroc_pairwise(s, y)))
        invariant &= metrics.auroc(3 * s - 7, y) == fast and metrics.auroc(np.exp(s / n), y) == fast
    verdict(3, worst <= 1e-12 and invariant, f"max_gap={worst:.3g} monotone_invariant={invariant}")


def test_criterion_04_gradient_checks(verdict):
    rng = np.random.default_rng(21)
    X = rng.normal(size=(15, 4))
    y = (rng.random(15) < 0.5).astype(float)
    s = rng.uniform(0.5, 2.0, size=15)
    errs = {"lr": gradcheck.check_vector(linear.lr_objective(X, y, s, "l2", 0.3), rng.normal(size=5))}
    tasks = {"hip": (X[:8], y[:8], s[:8]), "knee": (X[8:], y[8:], s[8:])}
    mt, _, d = linear.multitask_objective(tasks, 0.2, 0.5)
    errs["multitask_lr"] = gradcheck.check_vector(mt, rng.normal(size=d + 2 * (d + 1)))
    cfg = neural.NeuralConfig(embed_dim=8, hidden_dim=6, attn_dim=4, init_scale=0.5)
    docs = [rng.integers(0, 25, size=int(rng.integers(1, 8))) for _ in range(6)]
    yd = np.array([0.0, 1.0, 1.0, 0.0, 1.0, 0.0])
    for agg in neural.AGGREGATIONS:
        params = neural.init_params(25, cfg, agg, ("hip", "knee"), np.random.default_rng(5))
        batches = {"hip": (neural.make_batch(docs[:4]), yd[:4], np.ones(4)),
                   "knee": (neural.make_batch(docs[2:]), yd[2:], np.linspace(0.5, 1.5, 4))}
        gradcheck.nudge_off_kinks(params, batches)
        errs[f"average_{agg}"] = max(gradcheck.grad_check(params, agg, batches).values())
    worst = max(errs.values())
    verdict(4, worst <= 1e-5, " ".join(f"{k}={v:.2g}" for k, v in errs.items()))


def test_criterion_05_tfidf_hand_oracle(verdict):
    docs = [["a", "b"], ["a"]]
    vocab = build_vocab(docs, min_df=1, reserved=())
    C = count_matrix(docs, vocab)
    idf = fit_idf(C, len(vocab))
    ia, ib = vocab.index["a"], vocab.index["b"]
    raw = tfidf_matrix(C, idf, "none").toarray()[0]
    l2 = tfidf_matrix(C, idf, "l2").toarray()[0]
    got = np.array([raw[ia], raw[ib], l2[ia], l2[ib]])
    want = np.array([1.0, 1.405465, 0.57974, 0.81485])
    gap = np.abs(got - want)
    verdict(5, bool(np.all(gap <= 1e-5)),
            f"raw=({got[0]:.6f}, {got[1]:.6f}) l2=({got[2]:.6f}, {got[3]:.6f}) max_gap={gap.max():.2g}")


def test_criterion_06_lda_recovery(verdict):
    rng = np.random.default_rng(22)
    rows = [np.bincount(rng.integers(0, 25, size=40) + 25 * (d % 2), minlength=50) for d in range(200)]
    C = sp.csr_matrix(np.array(rows))
    t0 = time.perf_counter()
    model = lda_fit(C, 2, gibbs_iters=300, burn_in=100, seed=0)
    theta = lda_transform_matrix(model, C, infer_iters=50)
    secs = time.perf_counter() - t0
    mass = np.stack([model.phi[:, :25].sum(1), model.phi[:, 25:].sum(1)], axis=1)
    purity = max(mass[0, 0] + mass[1, 1], mass[0, 1] + mass[1, 0]) / 2
    row_gap = max(np.abs(model.phi.sum(1) - 1).max(), np.abs(theta.sum(1) - 1).max())
    verdict(6, purity >= 0.90 and row_gap <= 1e-9 and secs <= 60,
            f"purity={purity:.4f} row_sum_gap={row_gap:.2g} seconds={secs:.1f}")


def test_criterion_07_l1_extremes(verdict):
    rng = np.random.default_rng(23)
    X = rng.normal(size=(150, 6))
    y = (X @ rng.normal(size=6) + rng.normal(size=150) > 0).astype(float)
    lmax = linear.l1_lambda_max(X, y)
    zero = all(np.count_nonzero(linear.train_lr(X, y, "l1", lam).w) == 0 for lam in (lmax, 2 * lmax))
    smooth = linear.lr_objective(X, y, np.ones_like(y), "none", 0.0)
    ref = scipy_minimize(smooth, np.zeros(7), jac=True, method="L-BFGS-B", options={"gtol": 1e-12, "ftol": 1e-15})
    gap = max(abs(linear.train_lr(X, y, p, 0.0).objective - ref.fun) for p in ("l1", "l2", "none"))
    verdict(7, zero and gap <= 1e-8, f"lambda_max={lmax:.4g} zero_at_max={zero} lambda0_gap={gap:.2g}")


def test_criterion_08_split_label_window_invariants(verdict):
    from builders import HIP

    pats = [patient(f"P{i:03d}") for i in range(100)]
    encs = [encounter(f"E{i:03d}", f"P{i:03d}", 0, "inpatient", cpt=[HIP]) for i in range(100)]
    c = corpus(pats, encs, [note(f"N{i}", f"P{i:03d}", -1, "x") for i in range(100)])
    sp_ = split_cohort(build_cohort(c, identify_surgeries(c)), seed=8)
    members = [set(sp_.members(s)) for s in ("train", "validation", "test")]
    disjoint = sum(map(len, members)) == len(set().union(*members)) == 100
    counts = sp_.counts() == {"train": 70, "validation": 15, "test": 15}

    rng = np.random.default_rng(24)
    nested = True
    ws = [ObservationWindow.parse(w) for w in ("0", "3", "6", "12", "24", "36")]
    for k in range(100):
        offs = rng.integers(-1500, 40, size=int(rng.integers(0, 25)))
        ck = corpus([patient("Q")], [encounter(f"X{i}", "Q", int(o)) for i, o in enumerate(offs)],
                    [note(f"M{i}", "Q", int(o), "t") for i, o in enumerate(offs)])
        s = SurgeryEvent("Q", "X", DAY0, "hip", 60)
        prev: set = set()
        for w in ws:
            rec = slice_window(ck, s, w)
            cur = {n.note_id for n in rec.notes} | {e.encounter_id for e in rec.encounters}
            nested &= prev <= cur
            prev = cur

    s = SurgeryEvent("P1", "E0", DAY0, "hip", 60)
    idx = encounter("E0", "P1", 0, "inpatient")
    labels = {k: assign_label(s, [idx, encounter("E1", "P1", k, "inpatient")]).value for k in (29, 30, 31)}
    outpatient = assign_label(s, [idx, encounter("E1", "P1", 5, "outpatient")]).value
    label_ok = labels == {29: 1, 30: 1, 31: 0} and outpatient == 0
    verdict(8, disjoint and counts and nested and label_ok,
            f"disjoint={disjoint} counts_70_15_15={counts} nesting={nested} labels={labels} outpatient={outpatient}")


def test_criterion_09_imbalance_identities(verdict):
    X = np.array([[0.5, -1.0], [1.5, 0.2], [-0.3, 0.8], [2.0, 1.0]])
    y = np.array([1.0, 0.0, 0.0, 0.0])
    equal = True
    for mode in ("oversample", "undersample"):
        for seed in range(5):
            r = rebalance(X, y, ImbalancePlan(mode, seed))
            equal &= int(r.y.sum()) == int((1 - r.y).sum())
    dup = np.array([0, 0, 0, 1, 2, 3])
    gap = max(abs(linear.lr_full_objective(t, X, y, class_weights(y)) - linear.lr_full_objective(t, X[dup], y[dup]))
              for t in (np.array([0.3, -0.7, 0.1]), np.zeros(3), np.array([-2.0, 1.5, 0.4])))
    verdict(9, equal and gap <= 1e-12, f"class_counts_equal={equal} weight_vs_duplicate_gap={gap:.2g}")


def test_criterion_10_determinism_and_porter(tmp_path, small_corpus, verdict):
    from test_cli import _toml
    from conftest import SMALL_RUN

    cfg = tmp_path / "run.toml"
    cfg.write_text(_toml(dict(SMALL_RUN, paths={"corpus": str(small_corpus)})))
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["sweep", "--config", str(cfg), "--out", str(o), "--jobs", "1"]) for o in outs]
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    rows = [line.split("\t") for line in (ROOT / "tests" / "data" / "porter_vectors.tsv").read_text().splitlines()]
    mismatches = [w for w, want in rows if stem(w) != want]
    ok = codes == [0, 0] and same and len(files) > 1 and len(rows) >= 1000 and not mismatches
    verdict(10, ok, f"identical_csv_files={same} ({len(files)}) porter_words={len(rows)} mismatches={mismatches[:5]}")


def test_criterion_11_report_fidelity(tmp_path, verdict):
    rng = np.random.default_rng(25)
    rows = []
    for task in ("hip", "knee"):
        for m in ("LR+BOW", "LR+TFIDF+norm=l2", "Average+Attention"):
            for w in ("history", "0", "3", "36"):
                for split in ("validation", "test"):
                    if rng.random() < 0.25:
                        rows.append(ResultRow(task, "independent", "notes", m, w, split, None, None, None, 2, 30,
                                              False, 1))
                    else:
                        a = float(rng.random())
                        rows.append(ResultRow(task, "independent", "notes", m, w, split, a, a, a, 2, 30, True, 1))
    table = ResultsTable(rows)
    emit_report(table, tmp_path)
    round_trip = read_pivots(tmp_path) == {r.cell_key: r.auroc for r in table}
    csv_trip = ResultsTable.from_csv_text(table.to_csv_text()).rows == table.rows
    failed = [r for r in rows if not r.converged]
    text = pivot_text([r for r in rows if r.task == failed[0].task and r.split == failed[0].split])
    dashes = text.count("--") == sum(1 for r in failed if r.task == failed[0].task and r.split == failed[0].split)
    verdict(11, round_trip and csv_trip and dashes,
            f"pivot_round_trip={round_trip} csv_round_trip={csv_trip} dash_cells={dashes} non_converged={len(failed)}")
