"""Command-line entry point: ``windowbench <subcommand> [options]``.

Exit codes: 0 success, 1 user error (bad flags, config, inputs), 2 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import zipfile
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import __version__
from .config import ConfigError, RunConfig, from_dict, load_config, resolve
from .dataset import Dataset, prepare_dataset
from .ehr import CohortError, CorpusError, ObservationWindow, demographic_summary, format_demographics, load_corpus
from .persist import ModelFormatError, save_model
from .report import ReportError, emit_report
from .results import ResultsTable
from .sweep import GroupFeatures, RosterError, icd_mapper, parse_model_id, run_sweep, train_cell, validate
from .synth import audit_signal, generate
from .text import VocabularyError

log = logging.getLogger("windowbench")

MANIFEST = "manifest.json"
COMMANDS = ("synth", "cohort", "featurize", "train", "sweep", "report", "selftest")
USER_ERRORS = (ConfigError, RosterError, CorpusError, CohortError, ModelFormatError, ReportError,
               VocabularyError, FileExistsError, FileNotFoundError, NotADirectoryError, PermissionError)


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _setup_logging() -> None:
    level = os.environ.get("WINDOWBENCH_LOG", "info").lower()
    root = logging.getLogger("windowbench")
    root.handlers.clear()
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(logging.Formatter("level=%(levelname)s logger=%(name)s %(message)s"))
    root.addHandler(h)
    root.setLevel({"debug": logging.DEBUG, "info": logging.INFO}.get(level, logging.INFO))
    root.propagate = False
    if level not in ("debug", "info"):
        log.warning("event=bad_log_level value=%r using=info", level)


# ---------------------------------------------------------------------------
# helpers


def _config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.seed is not None:
        cfg = from_dict({"seed": args.seed})
    else:
        raise UserError("either --config or --seed is required")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg: RunConfig | None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is None:
        raise UserError("--out is required")
    return resolve(cfg, cfg.paths.out)


def _prepare_out(out: Path, overwrite: bool) -> None:
    """Create ``out``; an existing non-empty directory is replaced only with --overwrite,
    and only when it holds a manifest written by this tool."""
    if out.exists() and not out.is_dir():
        raise UserError(f"output path exists and is not a directory: {out}")
    if out.is_dir() and any(out.iterdir()):
        if not overwrite:
            raise UserError(f"output directory is not empty: {out} (pass --overwrite)")
        if not (out / MANIFEST).is_file():
            raise UserError(f"refusing to overwrite {out}: it has no {MANIFEST}")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _corpus_digest(corpus: Path) -> str:
    h = hashlib.sha256()
    for name in ("patients.jsonl", "encounters.jsonl", "notes.jsonl"):
        p = corpus / name
        h.update(name.encode())
        h.update(_sha256_file(p).encode() if p.is_file() else b"missing")
    return h.hexdigest()


def _write_manifest(out: Path, command: str, cfg: RunConfig | None, extra: dict | None = None) -> None:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST)
    man = {
        "tool": "windowbench",
        "version": __version__,
        "command": command,
        "seed": cfg.seed if cfg else None,
        "config_sha256": cfg.digest() if cfg else None,
        "config": cfg.to_dict() if cfg else None,
        "files": {p.relative_to(out).as_posix(): _sha256_file(p) for p in files},
    }
    if extra:
        man.update(extra)
    (out / MANIFEST).write_text(json.dumps(man, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _dataset(cfg: RunConfig) -> tuple[Dataset, Path]:
    corpus = resolve(cfg, cfg.paths.corpus)
    if not corpus.is_dir():
        raise UserError(f"corpus directory not found: {corpus}")
    c = cfg.cohort
    ds = prepare_dataset(load_corpus(corpus), c.criteria(), cfg.split.ratios, cfg.seed, cfg.split.stratify,
                         c.hip_cpt, c.knee_cpt, c.tie_rule, c.horizon_days)
    return ds, corpus


def save_csr(path: Path, X: sp.spmatrix) -> None:
    """Write a CSR matrix readable by ``scipy.sparse.load_npz`` with fixed zip timestamps."""
    X = sp.csr_matrix(X)
    arrays = {"format": np.array(b"csr"), "shape": np.array(X.shape), "data": X.data,
              "indices": X.indices, "indptr": X.indptr}
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.save(buf, arr, allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = Path(args.out) if args.out else resolve(cfg, cfg.paths.corpus)
    generate(cfg.synth, out, overwrite=args.overwrite)
    audit = audit_signal(out, cfg.synth)
    for line in audit.lines():
        print(line)
    if not audit.passed(cfg.synth.leak_rate):
        log.error("event=audit_failed dir=%s", out)
        return 2
    _write_manifest(out, "synth", cfg, {"corpus_sha256": _corpus_digest(out)})
    return 0


def cmd_cohort(args) -> int:
    cfg = _config(args)
    ds, corpus = _dataset(cfg)
    co = ds.cohort
    print("funnel " + " ".join(f"{k}={v}" for k, v in co.funnel.items()))
    print("excluded " + " ".join(f"{k}={v}" for k, v in co.tally.items()))
    for task in cfg.sweep.tasks:
        ex = ds.select(task)
        print(f"task={task} surgeries={len(ex)} positives={sum(e.label for e in ex)}")
    print("split " + " ".join(f"{k}={v}" for k, v in ds.split.counts().items()))
    print(format_demographics(demographic_summary(ds.corpus, co, ds.split)))
    if args.out:
        out = Path(args.out)
        _prepare_out(out, args.overwrite)
        lines = ["key,patient_id,task,surgery_date,label,split"]
        lines += [f"{e.key},{e.surgery.patient_id},{e.task},{e.surgery.surgery_date.isoformat()},{e.label},{e.split}"
                  for e in ds.examples]
        (out / "cohort.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        _write_manifest(out, "cohort", cfg, {"corpus_sha256": _corpus_digest(corpus)})
    return 0


def cmd_featurize(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    ds, corpus = _dataset(cfg)
    _prepare_out(out, args.overwrite)
    icd = icd_mapper(cfg)
    examples = [e for e in ds.examples if e.task in cfg.sweep.tasks]
    lines = ["row,key,task,label,split"] + [f"{i},{e.key},{e.task},{e.label},{e.split}" for i, e in enumerate(examples)]
    (out / "examples.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for source in cfg.sweep.sources:
        for w in cfg.sweep.windows:
            window = ObservationWindow.parse(w)
            feats = GroupFeatures(ds, cfg, source, window, examples, icd)
            d = out / "features" / source / window.label
            d.mkdir(parents=True, exist_ok=True)
            if source in ("notes", "both"):
                vocab, counts = feats._vocab_counts(source)
                save_csr(d / "counts.npz", counts)
                vocab.dump_tsv(d / "vocab.tsv")
            if source in ("structured", "both"):
                save_csr(d / "structured.npz", feats.structured())
                feats._cache["struct_dict"].dump_tsv(d / "dictionary.tsv")
            log.info("event=featurized source=%s window=%s", source, window.label)
    _write_manifest(out, "featurize", cfg, {"corpus_sha256": _corpus_digest(corpus)})
    print(out)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    parse_model_id(args.model)
    out = _out_dir(args, cfg)
    ds, corpus = _dataset(cfg)
    source = args.source or cfg.sweep.sources[0]
    window = ObservationWindow.parse(args.window).label
    if args.mode == "independent" and args.task is None:
        raise UserError("--task is required in independent mode")
    table, model, seed, fhash = train_cell(cfg, ds, args.model, args.mode, source, window, args.task)
    _prepare_out(out, args.overwrite)
    table.write_csv(out / "results.csv")
    if model is not None:
        save_model(model, out / "model.json", fhash, seed)
    _write_manifest(out, "train", cfg, {"corpus_sha256": _corpus_digest(corpus),
                                        "cell": {"model_id": args.model, "mode": args.mode, "source": source,
                                                 "window": window, "task": args.task}})
    sys.stdout.write(table.to_csv_text())
    return 0 if model is not None else 2


def cmd_sweep(args) -> int:
    cfg = _config(args)
    validate(cfg)
    out = _out_dir(args, cfg)
    ds, corpus = _dataset(cfg)
    _prepare_out(out, args.overwrite)
    jobs = args.jobs or os.cpu_count() or 1
    log.info("event=sweep_start seed=%d config_sha256=%s jobs=%d", cfg.seed, cfg.digest(), jobs)
    results = run_sweep(cfg, ds, jobs=jobs)
    written = emit_report(results, out)
    if args.figures or cfg.sweep.figures:
        from .plotting import render_figures

        written += render_figures(results, out)
    _write_manifest(out, "sweep", cfg, {"corpus_sha256": _corpus_digest(corpus)})
    for p in written:
        print(p.relative_to(out).as_posix())
    return 0


def cmd_report(args) -> int:
    src = Path(args.results)
    if not src.is_file():
        raise UserError(f"results file not found: {src}")
    try:
        results = ResultsTable.read_csv(src)
    except ValueError as exc:
        raise UserError(f"{src}: {exc}") from None
    cfg = load_config(args.config) if args.config else None
    out = _out_dir(args, cfg)
    _prepare_out(out, args.overwrite)
    written = emit_report(results, out)
    if args.figures:
        from .plotting import render_figures

        written += render_figures(results, out)
    _write_manifest(out, "report", cfg, {"results_sha256": _sha256_file(src)})
    for p in written:
        print(p.relative_to(out).as_posix())
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    ok = True
    for name, passed, detail in run_selftest():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name} {detail}")
    return 0 if ok else 2


HANDLERS = {
    "synth": cmd_synth,
    "cohort": cmd_cohort,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--jobs", type=int, default=0, metavar="N", help="sweep worker processes (default: CPU count)")
    common.add_argument("--overwrite", action="store_true", help="replace an existing output directory")
    common.add_argument("--figures", action="store_true", help="also render PNG figures (sweep, report)")

    p = _Parser(prog="windowbench", description="Observation-window benchmark for readmission prediction.")
    p.add_argument("--version", action="version", version=f"windowbench {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    sub.required = True
    sub.add_parser("synth", parents=[common], help="generate a synthetic corpus and audit it")
    sub.add_parser("cohort", parents=[common], help="build, label and split the cohort; print summaries")
    sub.add_parser("featurize", parents=[common], help="write per-window feature matrices")
    t = sub.add_parser("train", parents=[common], help="fit and score one sweep cell")
    t.add_argument("--model", required=True, help='model id, e.g. "LR+TFIDF+norm=l2"')
    t.add_argument("--window", required=True, help='window label: history, 0, 3, ...')
    t.add_argument("--task", choices=("hip", "knee"))
    t.add_argument("--source", choices=("notes", "structured", "both"))
    t.add_argument("--mode", choices=("independent", "multitask"), default="independent")
    sub.add_parser("sweep", parents=[common], help="run the full sweep and write the report")
    r = sub.add_parser("report", parents=[common], help="render report files from a results.csv")
    r.add_argument("--results", required=True, metavar="FILE")
    sub.add_parser("selftest", parents=[common], help="run built-in oracle checks")
    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.jobs < 0:
        print("windowbench: error: --jobs must be non-negative", file=sys.stderr)
        return 1
    try:
        return HANDLERS[args.command](args)
    except (UserError, *USER_ERRORS) as exc:
        print(f"windowbench: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"windowbench: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is a broken invariant
        log.exception("event=internal_error error=%r", str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
