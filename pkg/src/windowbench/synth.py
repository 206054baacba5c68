"""Synthetic EHR corpora with planted, time-banded readmission signal.

Every patient has one index arthroplasty. Background notes and encounters
follow per-patient Poisson processes. For positive surgeries, signal tokens
and signal codes are placed only inside their configured bands before
surgery, so the effect of the observation window can be measured.
"""

from __future__ import annotations

import datetime as dt
import functools
import itertools
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ehr import DAYS_PER_MONTH, assign_label, identify_surgeries, load_corpus
from .text import tokenize

log = logging.getLogger(__name__)

ICD10_START = dt.date(2015, 10, 1)
CORPUS_FILES = ("patients.jsonl", "encounters.jsonl", "notes.jsonl")
GEM_FILE = "gem.csv"

HIP_CODES = ("27130", "27132", "27134")
KNEE_CODES = ("27447", "27446")

# (icd9, icd10) pairs for the background diagnosis pool
_DX_PAIRS = [
    ("4019", "I10"), ("25000", "E119"), ("2724", "E785"), ("53081", "K219"), ("311", "F329"),
    ("30000", "F419"), ("71946", "M25569"), ("7242", "M545"), ("27800", "E669"), ("42731", "I4891"),
    ("41401", "I2510"), ("5859", "N189"), ("496", "J449"), ("49390", "J45909"), ("2449", "E039"),
    ("73300", "M810"), ("71596", "M1711"), ("71595", "M1611"), ("78900", "R109"), ("7295", "M79609"),
    ("2859", "D649"), ("5990", "N390"), ("78650", "R0789"), ("7862", "R05"), ("4280", "I509"),
    ("32723", "G4733"), ("3051", "F17210"), ("7140", "M069"), ("2768", "E876"), ("V5861", "Z7901"),
]
_N_SYNTH_DX = 70
# ICD9 codes deliberately absent from the GEM table (they map to UNK_ICD)
_UNMAPPED_ICD9 = ("V7281", "E8889")

_LABS = [("hgb", "g/dL", 13.5, 1.5), ("wbc", "10^3/uL", 7.0, 2.0), ("creat", "mg/dL", 1.0, 0.3),
         ("glucose", "mg/dL", 105.0, 25.0), ("sodium", "mmol/L", 139.0, 3.0), ("inr", "", 1.1, 0.2),
         ("Cholesterol", "mg/dL", 190.0, 35.0), ("Blood Type", "", None, None)]
_VITALS = [("bp_systolic", "mmHg", 130.0, 15.0), ("heart_rate", "bpm", 76.0, 11.0),
           ("temperature", "C", 36.8, 0.4), ("bmi", "kg/m2", 30.0, 5.0), ("Cigarettes", "", None, None)]
_MEDS = [("acetaminophen", "161"), ("oxycodone", "7804"), ("lisinopril", "29046"), ("metformin", "6809"),
         ("atorvastatin", "83367"), ("warfarin", "11289"), ("aspirin", "1191"), ("omeprazole", "7646"),
         ("gabapentin", "25480"), ("enoxaparin", "67108"), ("celecoxib", "140587"), ("B12 injection", "B12")]
_PAYERS = ("medicare", "private", "medicaid", "self pay")
_DISPOSITION = ("home", "home health", "rehab", "skilled nursing")
_RACES = ("White", "Black", "Asian", "Hispanic", "Other", "Unknown")
_RACE_P = (0.78, 0.07, 0.04, 0.05, 0.04, 0.02)

_BASE_WORDS = (
    "patient pain knee hip joint left right bilateral swelling stiffness gait walker cane physical therapy "
    "range motion flexion extension tenderness effusion xray imaging arthritis osteoarthritis degenerative "
    "narrowing replacement arthroplasty prosthesis incision wound dressing drain sutures staples ambulate "
    "ambulating weight bearing tolerated fever chills nausea vomiting tolerating diet stable vital signs "
    "afebrile alert oriented history presents reports denies follow clinic visit plan continue medication "
    "dose tablet daily nightly analgesic opioid anticoagulation prophylaxis discharge home rehab nursing "
    "cardiac pulmonary renal hypertension diabetes obesity smoker former exam normal mild moderate severe "
    "chronic acute improved worsening recommended scheduled surgery operative anesthesia spinal general "
    "blood loss estimated tolerated procedure complications none noted evaluation assessment"
).split()
_PREFIXES = ("cardi", "neur", "hepat", "nephr", "oste", "myo", "derm", "gastr", "pulmon", "angi", "arthr", "chondr")
_ROOTS = ("o", "a", "i", "e")
_SUFFIXES = ("tomy", "plasty", "algia", "itis", "pathy", "scopy", "gram", "logy", "megaly", "penia", "lysis", "trophy")

DEFAULT_SIGNAL_TOKENS = ("zyloric", "quenrath", "paxidurn", "velmorix")
# (icd9, icd10) diagnosis pair and medication carried by structured signal encounters
SIGNAL_DX = ("V9191", "U811")
SIGNAL_MED = ("varenthine", "SIG001")


def background_words(size: int) -> list[str]:
    """Deterministic synthetic clinical vocabulary of ``size`` distinct lowercase words."""
    words = list(dict.fromkeys(_BASE_WORDS))
    for p, r, s in itertools.product(_PREFIXES, _ROOTS, _SUFFIXES):
        if len(words) >= size:
            break
        words.append(p + r + s)
    n = 0
    while len(words) < size:
        words.append(f"term{n:04d}x")
        n += 1
    return words[:size]


@dataclass(frozen=True)
class SynthConfig:
    n_patients: int = 2000
    prevalence_hip: float = 0.095
    prevalence_knee: float = 0.105
    hip_fraction: float = 0.46
    note_rate: float = 6.0  # notes per patient-year
    encounter_rate: float = 6.0  # encounters per patient-year
    text_signal_band: tuple[int, int] = (90, 0)  # (start, end) days before surgery
    structured_signal_band: tuple[int, int] = (360, 0)
    signal_strength: float = 0.95
    background_vocab_size: int = 3000
    signal_tokens: tuple[str, ...] = DEFAULT_SIGNAL_TOKENS
    signal_tokens_per_note: int = 2
    exclusion_rates: tuple[float, float, float] = (0.06, 0.0473, 0.2371)  # deceased, over_90, no_notes
    leak_rate: float = 0.0
    tokens_per_note: float = 12.0
    episode_days: float = 120.0  # mean length of a background topic episode
    episode_terms: int = 15  # background words tied to one episode
    episode_mix: float = 0.7  # share of note tokens drawn from the episode's words
    history_years: tuple[float, float] = (3.0, 6.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 10:
            raise ValueError("n_patients must be at least 10")
        for name in ("prevalence_hip", "prevalence_knee", "hip_fraction", "signal_strength", "leak_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("text_signal_band", "structured_signal_band"):
            start, end = getattr(self, name)
            if not start >= end >= 0:
                raise ValueError(f"{name} needs start >= end >= 0, got ({start}, {end})")
        d, o, nn = self.exclusion_rates
        if min(d, o, nn) < 0 or d + o > 1 or nn > 1:
            raise ValueError(f"bad exclusion rates {self.exclusion_rates}")
        if self.note_rate < 0 or self.encounter_rate < 0 or self.tokens_per_note <= 0:
            raise ValueError("rates must be non-negative")
        if self.episode_days <= 0 or not 0.0 <= self.episode_mix <= 1.0:
            raise ValueError("episode_days must be positive and episode_mix in [0, 1]")
        if not 1 <= self.episode_terms <= self.background_vocab_size:
            raise ValueError("episode_terms must be between 1 and background_vocab_size")
        lo, hi = self.history_years
        if not 3.0 <= lo <= hi:
            raise ValueError("history_years must satisfy 3 <= low <= high")
        if max(self.text_signal_band[0], self.structured_signal_band[0]) > lo * 365:
            raise ValueError("signal band reaches past the start of the record")
        if not self.signal_tokens:
            raise ValueError("at least one signal token is needed")
        words = set(background_words(self.background_vocab_size))
        clash = [t for t in self.signal_tokens if t in words or tokenize(t) != [t]]
        if clash:
            raise ValueError(f"signal tokens must be single lowercase tokens outside the background vocabulary: {clash}")

    @classmethod
    def from_dict(cls, d: dict) -> SynthConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth keys: {sorted(unknown)}")
        kw = dict(d)
        for k in ("text_signal_band", "structured_signal_band", "signal_tokens", "exclusion_rates", "history_years"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


# ---------------------------------------------------------------------------
# generation


@dataclass
class _Pools:
    words: list[str]
    word_p: np.ndarray
    dx: list[tuple[str, str]]
    dx_p: np.ndarray


def _zipf(n: int, rng: np.random.Generator, s: float = 1.0) -> np.ndarray:
    w = 1.0 / np.arange(2, n + 2) ** s
    w = w[rng.permutation(n)]
    return w / w.sum()


def _pools(cfg: SynthConfig) -> _Pools:
    rng = np.random.default_rng([cfg.seed, 2**31 - 1])
    words = background_words(cfg.background_vocab_size)
    dx = list(_DX_PAIRS) + [(f"8{i // 10:02d}{i % 10}", f"S{i // 10:02d}{i % 10}") for i in range(_N_SYNTH_DX)]
    dx += [(c, "") for c in _UNMAPPED_ICD9]
    return _Pools(words, _zipf(len(words), rng), dx, _zipf(len(dx), rng))


def gem_rows() -> list[tuple[str, str]]:
    pairs = list(_DX_PAIRS) + [(f"8{i // 10:02d}{i % 10}", f"S{i // 10:02d}{i % 10}") for i in range(_N_SYNTH_DX)]
    pairs.append(SIGNAL_DX)
    return sorted(pairs)


def _dx(pair: tuple[str, str], on: dt.date) -> dict:
    icd9, icd10 = pair
    if on < ICD10_START or not icd10:
        code = icd9 if len(icd9) <= 3 else f"{icd9[:3]}.{icd9[3:]}"
        return {"code": code, "version": "icd9"}
    code = icd10 if len(icd10) <= 3 else f"{icd10[:3]}.{icd10[3:]}"
    return {"code": code, "version": "icd10"}


def _note_text(rng, pools: _Pools, mean_len: float, extra: list[str] = (),
               topic: np.ndarray | None = None, mix: float = 0.0) -> str:
    n = int(rng.poisson(mean_len)) + 3
    idx = rng.choice(len(pools.words), size=n, p=pools.word_p)
    if topic is not None and mix > 0:
        own = rng.random(n) < mix
        idx[own] = rng.choice(topic, size=int(own.sum()))
    toks = [pools.words[i] for i in idx]
    if rng.random() < 0.3:
        toks += ["bp", str(int(rng.integers(100, 160))), str(int(rng.integers(60, 95)))]
    for t in extra:
        toks.insert(int(rng.integers(0, len(toks) + 1)), t)
    words = []
    for i, t in enumerate(toks):
        words.append(t.capitalize() if i == 0 else t)
        if rng.random() < 0.08:
            words[-1] += "."
    return " ".join(words) + "."


def _measure(rng, spec):
    code, unit, mu, sd = spec
    if mu is None or rng.random() < 0.1:
        return {"code": code, "value": None, "unit": unit}
    return {"code": code, "value": round(float(rng.normal(mu, sd)), 2), "unit": unit}


def _encounter(rng, pools: _Pools, eid: str, pid: str, date: dt.date, setting: str, extra_dx=(), extra_meds=()) -> dict:
    n_dx = int(rng.integers(1, 4))
    dx = [_dx(pools.dx[i], date) for i in rng.choice(len(pools.dx), size=n_dx, p=pools.dx_p)]
    dx += [_dx(p, date) for p in extra_dx]
    meds = [{"name": n, "code": c, "dose": None, "unit": ""} for n, c in
            (_MEDS[i] for i in rng.choice(len(_MEDS), size=int(rng.integers(0, 3)), replace=False))]
    meds += [{"name": n, "code": c, "dose": 1.0, "unit": "tab"} for n, c in extra_meds]
    labs = [_measure(rng, _LABS[i]) for i in rng.choice(len(_LABS), size=int(rng.integers(0, 4)), replace=False)]
    vitals = [_measure(rng, _VITALS[i]) for i in rng.choice(len(_VITALS), size=int(rng.integers(0, 3)), replace=False)]
    rec = {
        "encounter_id": eid,
        "patient_id": pid,
        "admit_date": date.isoformat(),
        "discharge_date": None,
        "setting": setting,
        "cpt_codes": ["99213"] if setting == "outpatient" else [],
        "diagnoses": dx,
        "medications": meds,
        "labs": labs,
        "vitals": vitals,
        "admission_info": {},
    }
    if setting == "inpatient":
        rec["discharge_date"] = (date + dt.timedelta(days=int(rng.integers(1, 6)))).isoformat()
        rec["admission_info"] = {
            "payer": _PAYERS[int(rng.integers(len(_PAYERS)))],
            "discharge_disposition": _DISPOSITION[int(rng.integers(len(_DISPOSITION)))],
        }
    return rec


def _band_day(rng, band: tuple[int, int]) -> int:
    start, end = band
    return int(rng.integers(end, start + 1))


def _patient(i: int, cfg: SynthConfig, pools: _Pools):
    rng = np.random.default_rng([cfg.seed, i])
    pid = f"P{i:06d}"
    d_rate, o_rate, nn_rate = cfg.exclusion_rates
    u = rng.random()
    deceased, over_90 = u < d_rate, d_rate <= u < d_rate + o_rate
    no_notes = (not deceased and not over_90) and rng.random() < nn_rate

    surgery = dt.date(2012, 1, 1) + dt.timedelta(days=int(rng.integers(0, 8 * 365)))
    age = int(rng.integers(91, 98)) if over_90 else int(np.clip(round(rng.normal(66, 10)), 40, 89))
    birth = surgery - dt.timedelta(days=int(age * 365.25 + rng.integers(1, 360)))
    kind = "hip" if rng.random() < cfg.hip_fraction else "knee"
    positive = rng.random() < (cfg.prevalence_hip if kind == "hip" else cfg.prevalence_knee)
    text_carrier = rng.random() < (cfg.signal_strength if positive else cfg.leak_rate)
    struct_carrier = rng.random() < (cfg.signal_strength if positive else cfg.leak_rate)
    span_days = int(round(rng.uniform(*cfg.history_years) * 365.25))
    start = surgery - dt.timedelta(days=span_days)

    patient = {
        "patient_id": pid,
        "birth_date": birth.isoformat(),
        "sex": "female" if rng.random() < 0.5 else "male",
        "race": _RACES[int(rng.choice(len(_RACES), p=_RACE_P))],
        "death_date": (surgery + dt.timedelta(days=int(rng.integers(60, 1500)))).isoformat() if deceased else None,
        "demographics": {
            "education": ("high school", "college", "graduate", "unknown")[int(rng.integers(4))],
            "language": "english" if rng.random() < 0.9 else "spanish",
            "marital": ("married", "single", "widowed", "divorced")[int(rng.integers(4))],
        },
    }

    # encounters: background, structured slot, index surgery, follow-up
    dated: list[tuple[dt.date, dict]] = []
    k = itertools.count()
    n_bg = rng.poisson(cfg.encounter_rate * span_days / 365.25)
    for day in np.sort(rng.integers(1, span_days + 1, size=n_bg))[::-1]:
        date = surgery - dt.timedelta(days=int(day))
        setting = "inpatient" if rng.random() < 0.1 else "outpatient"
        dated.append((date, _encounter(rng, pools, f"E{i:06d}-{next(k):03d}", pid, date, setting)))
    slot = surgery - dt.timedelta(days=_band_day(rng, cfg.structured_signal_band))
    sig = dict(extra_dx=[SIGNAL_DX], extra_meds=[SIGNAL_MED]) if struct_carrier else {}
    dated.append((slot, _encounter(rng, pools, f"E{i:06d}-{next(k):03d}", pid, slot, "outpatient", **sig)))
    index = _encounter(rng, pools, f"E{i:06d}-{next(k):03d}", pid, surgery, "inpatient")
    cpt = HIP_CODES if kind == "hip" else KNEE_CODES
    index["cpt_codes"] = [cpt[int(rng.integers(len(cpt)))]]
    index["diagnoses"].insert(0, _dx(("71595", "M1611") if kind == "hip" else ("71596", "M1711"), surgery))
    dated.append((surgery, index))
    if rng.random() < 0.5:
        d = surgery + dt.timedelta(days=int(rng.integers(5, 26)))
        dated.append((d, _encounter(rng, pools, f"E{i:06d}-{next(k):03d}", pid, d, "outpatient")))
    if positive:
        d = surgery + dt.timedelta(days=int(rng.integers(1, 31)))
        dated.append((d, _encounter(rng, pools, f"E{i:06d}-{next(k):03d}", pid, d, "inpatient")))
    elif rng.random() < 0.1:
        d = surgery + dt.timedelta(days=int(rng.integers(31, 400)))
        dated.append((d, _encounter(rng, pools, f"E{i:06d}-{next(k):03d}", pid, d, "inpatient")))

    notes: list[tuple[dt.date, dict]] = []
    if not no_notes:
        k = itertools.count()
        n_notes = rng.poisson(cfg.note_rate * span_days / 365.25)
        days = np.sort(rng.integers(1, span_days + 1, size=n_notes))[::-1].tolist()
        text_slot = _band_day(rng, cfg.text_signal_band)
        # background topic episodes, newest first; boundaries in days before surgery
        bounds, topics = [], []
        edge = 0.0
        while edge <= span_days:
            edge += rng.exponential(cfg.episode_days)
            bounds.append(edge)
            topics.append(rng.choice(len(pools.words), size=cfg.episode_terms, replace=False))
        for day in days + [text_slot, 0]:
            date = surgery - dt.timedelta(days=int(day))
            extra = []
            if day == text_slot and text_carrier:
                extra = [cfg.signal_tokens[j] for j in
                         rng.choice(len(cfg.signal_tokens), size=cfg.signal_tokens_per_note)]
            topic = topics[int(np.searchsorted(bounds, day, side="right"))]
            text = _note_text(rng, pools, cfg.tokens_per_note, extra, topic, cfg.episode_mix)
            notes.append((date, {"note_id": f"N{i:06d}-{next(k):03d}", "patient_id": pid, "date": date.isoformat(), "text": text}))
            text_slot = None if day == text_slot else text_slot

    dated.sort(key=lambda x: x[0])
    notes.sort(key=lambda x: x[0])
    return patient, [e for _, e in dated], [n for _, n in notes]


def generate(cfg: SynthConfig, out_dir: str | Path, overwrite: bool = False) -> Path:
    """Write patients/encounters/notes JSONL, a GEM table and the config to ``out_dir``."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not overwrite:
        raise FileExistsError(f"{out} is not empty (use overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    pools = _pools(cfg)
    dump = functools.partial(json.dumps, ensure_ascii=False, separators=(",", ":"))
    with (out / "patients.jsonl").open("w", encoding="utf-8", newline="\n") as fp, \
         (out / "encounters.jsonl").open("w", encoding="utf-8", newline="\n") as fe, \
         (out / "notes.jsonl").open("w", encoding="utf-8", newline="\n") as fn:
        for i in range(cfg.n_patients):
            patient, encs, notes = _patient(i, cfg, pools)
            fp.write(dump(patient) + "\n")
            for e in encs:
                fe.write(dump(e) + "\n")
            for n in notes:
                fn.write(dump(n) + "\n")
    rows = ["source_code,target_code"] + [f"{a},{b}" for a, b in gem_rows()]
    (out / GEM_FILE).write_text("\n".join(rows) + "\n", encoding="utf-8")
    (out / "synth_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("event=synth_done patients=%d out=%s", cfg.n_patients, out)
    return out


# ---------------------------------------------------------------------------
# audit


@dataclass
class SignalAudit:
    n_patients: int
    n_surgeries: int
    n_positive: int
    total_notes: int
    expected_notes: float
    text_buckets: dict[int, dict[int, int]] = field(default_factory=dict)  # label -> bucket -> count
    code_buckets: dict[int, dict[int, int]] = field(default_factory=dict)
    text_outside_band: int = 0
    codes_outside_band: int = 0
    negatives_with_signal: int = 0
    negatives: int = 0
    funnel: dict[str, int] = field(default_factory=dict)

    @property
    def positive_fraction(self) -> float:
        return self.n_positive / self.n_surgeries if self.n_surgeries else float("nan")

    @property
    def leak_fraction(self) -> float:
        return self.negatives_with_signal / self.negatives if self.negatives else 0.0

    def passed(self, leak_rate: float = 0.0, tol: float = 0.1) -> bool:
        notes_ok = abs(self.total_notes - self.expected_notes) <= tol * self.expected_notes
        leak_ok = self.leak_fraction <= leak_rate + 3 * math.sqrt(max(leak_rate * (1 - leak_rate), 0) / max(self.negatives, 1))
        return self.text_outside_band == 0 and self.codes_outside_band == 0 and notes_ok and leak_ok

    def lines(self) -> list[str]:
        out = [
            f"patients={self.n_patients} surgeries={self.n_surgeries} positive_fraction={self.positive_fraction:.4f}",
            f"notes={self.total_notes} expected_notes={self.expected_notes:.1f}",
            f"text_outside_band={self.text_outside_band} codes_outside_band={self.codes_outside_band}",
            f"negatives_with_signal={self.negatives_with_signal}/{self.negatives}",
        ]
        for name, b in (("text", self.text_buckets), ("codes", self.code_buckets)):
            for lab in sorted(b):
                cells = " ".join(f"{k}:{v}" for k, v in sorted(b[lab].items()))
                out.append(f"{name} label={lab} buckets {cells}")
        out.append("funnel " + " ".join(f"{k}={v}" for k, v in self.funnel.items()))
        return out


def audit_signal(corpus_dir: str | Path, cfg: SynthConfig) -> SignalAudit:
    """Scan a generated corpus and count signal per 30-day bucket before surgery, by label.

    Bucket b holds items dated floor(days_before / 30) = b; items after
    surgery are ignored.
    """
    corpus = load_corpus(corpus_dir)
    surgeries = identify_surgeries(corpus)
    signal = frozenset(cfg.signal_tokens)
    sig_dx = {SIGNAL_DX[0], SIGNAL_DX[1]}
    sig_med = SIGNAL_MED[1]
    text_b: dict[int, Counter] = {0: Counter(), 1: Counter()}
    code_b: dict[int, Counter] = {0: Counter(), 1: Counter()}
    t_start, t_end = cfg.text_signal_band
    s_start, s_end = cfg.structured_signal_band
    text_out = codes_out = neg_sig = negatives = positives = 0
    for s in surgeries:
        label = assign_label(s, corpus.encounters_of(s.patient_id)).value
        positives += label
        negatives += 1 - label
        carried = False
        for n in corpus.notes_of(s.patient_id):
            days = (s.surgery_date - n.date).days
            hits = sum(t in signal for t in tokenize(n.text))
            if hits:
                carried = True
                if days < 0:
                    continue
                text_b[label][days // DAYS_PER_MONTH] += hits
                if not t_end <= days <= t_start:
                    text_out += hits
        for e in corpus.encounters_of(s.patient_id):
            days = (s.surgery_date - e.admit_date).days
            hits = sum(d.code.replace(".", "") in sig_dx for d in e.diagnoses)
            hits += sum(m.code == sig_med for m in e.medications)
            if hits:
                carried = True
                if days < 0:
                    continue
                code_b[label][days // DAYS_PER_MONTH] += hits
                if not s_end <= days <= s_start:
                    codes_out += hits
        if carried and label == 0:
            neg_sig += 1

    with_notes = [p for p in corpus.patients if corpus.notes_of(p)]
    mean_years = sum(cfg.history_years) / 2.0
    expected = len(with_notes) * (cfg.note_rate * mean_years + 2)
    total = sum(len(v) for v in corpus.notes.values())
    deceased = sum(1 for p in corpus.patients.values() if p.death_date is not None)
    return SignalAudit(
        n_patients=len(corpus.patients),
        n_surgeries=len(surgeries),
        n_positive=positives,
        total_notes=total,
        expected_notes=expected,
        text_buckets={k: dict(v) for k, v in text_b.items()},
        code_buckets={k: dict(v) for k, v in code_b.items()},
        text_outside_band=text_out,
        codes_outside_band=codes_out,
        negatives_with_signal=neg_sig,
        negatives=negatives,
        funnel={"patients": len(corpus.patients), "deceased": deceased, "with_notes": len(with_notes)},
    )
