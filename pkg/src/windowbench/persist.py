"""JSON serialization of trained models.

Arrays are stored as base64 of little-endian float64 bytes so a round trip
is bit-exact. Each blob records the hash of the vocabulary it was trained
against; loading with a different vocabulary is refused.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict
from pathlib import Path
from typing import Union

import numpy as np

from .linear import LinearModel, MultitaskLinearModel
from .neural import NeuralAverageModel, NeuralConfig

FORMAT_VERSION = 1

Model = Union[LinearModel, MultitaskLinearModel, NeuralAverageModel]


class ModelFormatError(ValueError):
    pass


def _enc(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _dec(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"].encode("ascii"))
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


def model_to_dict(model: Model, vocab_hash: str, seed: int) -> dict:
    out = {"format_version": FORMAT_VERSION, "vocab_hash": vocab_hash, "seed": int(seed)}
    if isinstance(model, LinearModel):
        out.update(
            kind="lr",
            dims={"features": model.dim},
            penalty=model.penalty,
            lam=model.lam,
            weights={"w": _enc(model.w), "b": model.b},
            meta={"n_iter": model.n_iter, "objective": model.objective, "converged": model.converged},
        )
    elif isinstance(model, MultitaskLinearModel):
        tasks = model.tasks
        out.update(
            kind="multitask_lr",
            dims={"features": int(model.w_shared.size), "tasks": list(tasks)},
            penalty="l2",
            lam={"shared": model.lam_shared, "task": model.lam_task},
            weights={
                "w_shared": _enc(model.w_shared),
                "w_task": {t: _enc(model.w_task[t]) for t in tasks},
                "b_task": {t: float(model.b_task[t]) for t in tasks},
            },
            meta={"n_iter": model.n_iter, "objective": model.objective, "converged": model.converged},
        )
    elif isinstance(model, NeuralAverageModel):
        cfg = model.config
        out.update(
            kind="neural_average",
            dims={"vocab": model.vocab_size, "embed": cfg.embed_dim, "hidden": cfg.hidden_dim,
                  "attn": cfg.attn_dim, "tasks": list(model.tasks)},
            penalty="none",
            lam=0.0,
            aggregation=model.aggregation,
            config=asdict(cfg),
            weights={k: _enc(v) for k, v in sorted(model.params.items())},
            meta={"epochs_run": model.epochs_run, "best_epoch": model.best_epoch,
                  "val_history": list(model.val_history)},
        )
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return out


def model_from_dict(d: dict, vocab_hash: str | None = None) -> Model:
    if d.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {d.get('format_version')!r}")
    if vocab_hash is not None and d["vocab_hash"] != vocab_hash:
        raise ModelFormatError(f"vocabulary hash mismatch: model {d['vocab_hash']}, given {vocab_hash}")
    kind, w, meta = d["kind"], d["weights"], d.get("meta", {})
    if kind == "lr":
        vec = _dec(w["w"])
        if vec.size != d["dims"]["features"]:
            raise ModelFormatError("weight vector does not match recorded dimension")
        return LinearModel(vec, float(w["b"]), d["penalty"], float(d["lam"]), meta.get("n_iter", 0),
                           meta.get("objective", float("nan")), meta.get("converged", True))
    if kind == "multitask_lr":
        tasks = d["dims"]["tasks"]
        return MultitaskLinearModel(
            _dec(w["w_shared"]),
            {t: _dec(w["w_task"][t]) for t in tasks},
            {t: float(w["b_task"][t]) for t in tasks},
            float(d["lam"]["shared"]),
            float(d["lam"]["task"]),
            meta.get("n_iter", 0),
            meta.get("objective", float("nan")),
            meta.get("converged", True),
        )
    if kind == "neural_average":
        return NeuralAverageModel(
            {k: _dec(v) for k, v in w.items()},
            d["aggregation"],
            tuple(d["dims"]["tasks"]),
            NeuralConfig(**d["config"]),
            d["seed"],
            meta.get("epochs_run", 0),
            meta.get("best_epoch", 0),
            tuple(meta.get("val_history", ())),
        )
    raise ModelFormatError(f"unknown model kind {kind!r}")


def save_model(model: Model, path: str | Path, vocab_hash: str, seed: int) -> None:
    blob = model_to_dict(model, vocab_hash, seed)
    Path(path).write_text(json.dumps(blob, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path, vocab_hash: str | None = None) -> Model:
    """Read a model; if ``vocab_hash`` is given it must equal the stored hash."""
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    return model_from_dict(d, vocab_hash)
