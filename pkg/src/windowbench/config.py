"""Run configuration read from TOML; every tunable has an explicit key."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ehr import HIP_CPT, KNEE_CPT, CohortCriteria, default_blacklist
from .neural import NeuralConfig
from .synth import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Paths:
    corpus: str = "corpus"
    out: str = "out"
    gem_table: str = ""  # empty: use <corpus>/gem.csv when present
    embeddings: str = ""


@dataclass(frozen=True)
class CohortSection:
    min_age: int = 18
    max_age: int = 90
    exclude_deceased: bool = True
    require_notes: bool = True
    blacklist: tuple[str, ...] | None = None  # None: built-in dropped-variable list
    hip_cpt: tuple[str, ...] = tuple(sorted(HIP_CPT))
    knee_cpt: tuple[str, ...] = tuple(sorted(KNEE_CPT))
    tie_rule: str = "both"
    horizon_days: int = 30

    def criteria(self) -> CohortCriteria:
        bl = default_blacklist() if self.blacklist is None else tuple(self.blacklist)
        return CohortCriteria(self.min_age, self.max_age, self.exclude_deceased, self.require_notes, bl)


@dataclass(frozen=True)
class SplitSection:
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    stratify: bool = False


@dataclass(frozen=True)
class TextSection:
    min_df: int = 5
    max_size: int = 50_000


@dataclass(frozen=True)
class LinearSection:
    penalty: str = "l2"
    lam: float = 1e-4
    lam_shared: float = 1e-4
    lam_task: float = 1e-3
    max_iter: int = 2000
    tol: float = 1e-8


@dataclass(frozen=True)
class LdaSection:
    k: int = 50
    alpha: float | None = None  # None: 50 / k
    beta: float = 0.01
    gibbs_iters: int = 500
    burn_in: int = 200
    thin: int = 10
    infer_iters: int = 100


@dataclass(frozen=True)
class SweepSection:
    windows: tuple[str, ...] = ("history", "0", "3", "6", "12", "24", "36")
    roster: tuple[str, ...] = ("LR+BinaryBOW", "LR+TFIDF+norm=l2", "Average+Attention")
    tasks: tuple[str, ...] = ("hip", "knee")
    modes: tuple[str, ...] = ("independent",)
    sources: tuple[str, ...] = ("notes",)
    imbalance: str = "none"
    bootstrap: int = 1000
    ci_level: float = 0.95
    record_timing: bool = False
    figures: bool = False


@dataclass(frozen=True)
class RunConfig:
    seed: int
    paths: Paths = field(default_factory=Paths)
    cohort: CohortSection = field(default_factory=CohortSection)
    split: SplitSection = field(default_factory=SplitSection)
    text: TextSection = field(default_factory=TextSection)
    linear: LinearSection = field(default_factory=LinearSection)
    lda: LdaSection = field(default_factory=LdaSection)
    neural: NeuralConfig = field(default_factory=NeuralConfig)
    sweep: SweepSection = field(default_factory=SweepSection)
    synth: SynthConfig = field(default_factory=SynthConfig)
    source_path: str = ""

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("source_path")
        return _plain(d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> RunConfig:
        return dataclasses.replace(self, seed=seed, synth=dataclasses.replace(self.synth, seed=seed))


_SECTIONS = {
    "paths": Paths,
    "cohort": CohortSection,
    "split": SplitSection,
    "text": TextSection,
    "linear": LinearSection,
    "lda": LdaSection,
    "neural": NeuralConfig,
    "sweep": SweepSection,
    "synth": SynthConfig,
}


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _build(cls, raw: dict, section: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{section}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def from_dict(raw: dict, source_path: str = "") -> RunConfig:
    raw = dict(raw)
    if "seed" not in raw:
        raise ConfigError("config must set a top-level 'seed'")
    seed = raw.pop("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    unknown = sorted(set(raw) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    kw: dict[str, Any] = {name: _build(cls, raw[name], name) for name, cls in _SECTIONS.items() if name in raw}
    if "synth" not in raw or "seed" not in raw.get("synth", {}):
        synth = kw.get("synth", SynthConfig())
        kw["synth"] = dataclasses.replace(synth, seed=seed)
    return RunConfig(seed=seed, source_path=source_path, **kw)


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = tomllib.loads(p.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return from_dict(raw, str(p))


def resolve(cfg: RunConfig, rel: str) -> Path:
    """Paths in a config file are relative to the file's directory."""
    p = Path(rel)
    if p.is_absolute() or not cfg.source_path:
        return p
    return Path(cfg.source_path).parent / p
