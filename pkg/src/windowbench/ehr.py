"""Longitudinal EHR records: loading, cohort construction, labels, windows and splits."""

from __future__ import annotations

import datetime as dt
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

HIP_CPT = frozenset({"27130", "27132", "27134", "27236", "27137", "27138", "27120", "27125"})
KNEE_CPT = frozenset({"27445", "27446", "27447", "27486", "27487"})

DAYS_PER_MONTH = 30
SPLITS = ("train", "validation", "test")


class CorpusError(ValueError):
    """Raised for unreadable or inconsistent corpus files."""


class CohortError(ValueError):
    pass


def default_blacklist() -> tuple[str, ...]:
    text = resources.files("windowbench").joinpath("data/dropped_variables.txt").read_text("utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


# ---------------------------------------------------------------------------
# record types


@dataclass(frozen=True)
class Patient:
    patient_id: str
    birth_date: dt.date
    sex: str
    race: str
    death_date: dt.date | None = None
    demographics: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.death_date is not None and self.death_date < self.birth_date:
            raise CorpusError(f"patient {self.patient_id}: death_date precedes birth_date")


@dataclass(frozen=True)
class Diagnosis:
    code: str
    version: str = "icd10"

    def __post_init__(self):
        if not self.code:
            raise CorpusError("empty diagnosis code")
        if self.version not in ("icd9", "icd10"):
            raise CorpusError(f"unknown diagnosis version {self.version!r}")


@dataclass(frozen=True)
class Medication:
    name: str
    code: str = ""
    dose: float | None = None
    unit: str = ""


@dataclass(frozen=True)
class Measurement:
    """A lab or vital sign observation; ``value`` is None when not recorded."""

    code: str
    value: float | None = None
    unit: str = ""


@dataclass(frozen=True)
class Encounter:
    encounter_id: str
    patient_id: str
    admit_date: dt.date
    discharge_date: dt.date | None = None
    setting: str = "outpatient"
    cpt_codes: tuple[str, ...] = ()
    diagnoses: tuple[Diagnosis, ...] = ()
    medications: tuple[Medication, ...] = ()
    labs: tuple[Measurement, ...] = ()
    vitals: tuple[Measurement, ...] = ()
    admission_info: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.discharge_date is not None and self.discharge_date < self.admit_date:
            raise CorpusError(f"encounter {self.encounter_id}: discharge before admit")
        if self.setting not in ("inpatient", "outpatient"):
            raise CorpusError(f"encounter {self.encounter_id}: bad setting {self.setting!r}")

    @property
    def date(self) -> dt.date:
        return self.admit_date


@dataclass(frozen=True)
class ClinicalNote:
    note_id: str
    patient_id: str
    date: dt.date
    text: str
    empty_ok: bool = False

    def __post_init__(self):
        if not self.text and not self.empty_ok:
            raise CorpusError(f"note {self.note_id}: empty text not flagged")


@dataclass(frozen=True)
class Corpus:
    patients: Mapping[str, Patient]
    encounters: Mapping[str, tuple[Encounter, ...]]
    notes: Mapping[str, tuple[ClinicalNote, ...]]
    warnings: tuple[str, ...] = ()

    def encounters_of(self, patient_id: str) -> tuple[Encounter, ...]:
        return self.encounters.get(patient_id, ())

    def notes_of(self, patient_id: str) -> tuple[ClinicalNote, ...]:
        return self.notes.get(patient_id, ())

    @property
    def counts(self) -> tuple[int, int, int]:
        return (
            len(self.patients),
            sum(len(v) for v in self.encounters.values()),
            sum(len(v) for v in self.notes.values()),
        )


@dataclass(frozen=True)
class SurgeryEvent:
    patient_id: str
    encounter_id: str
    surgery_date: dt.date
    surgery_type: str
    age_at_surgery: int

    @property
    def key(self) -> str:
        return f"{self.patient_id}/{self.encounter_id}/{self.surgery_type}"


@dataclass(frozen=True)
class Label:
    value: int
    readmit_encounter_id: str | None = None

    def __post_init__(self):
        if (self.value == 1) != (self.readmit_encounter_id is not None):
            raise ValueError("positive label iff readmission encounter present")


@dataclass(frozen=True, order=True)
class ObservationWindow:
    """How much history before (and including) the surgery date is admitted.

    kind is one of ``history`` (everything strictly before surgery),
    ``day0`` (the surgery date only) or ``months`` (the last 30*m days
    up to and including the surgery date).
    """

    kind: str
    months: int = 0

    def __post_init__(self):
        if self.kind not in ("history", "day0", "months"):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.kind == "months" and self.months <= 0:
            raise ValueError("months window needs a positive month count")

    @classmethod
    def history_only(cls) -> ObservationWindow:
        return cls("history")

    @classmethod
    def day_of_surgery(cls) -> ObservationWindow:
        return cls("day0")

    @classmethod
    def of_months(cls, m: int) -> ObservationWindow:
        return cls("months", int(m))

    @classmethod
    def parse(cls, text: str | int) -> ObservationWindow:
        s = str(text).strip().lower()
        if s in ("history", "only history", "history_only"):
            return cls.history_only()
        if s in ("0", "day0", "day_of_surgery"):
            return cls.day_of_surgery()
        try:
            m = int(s)
        except ValueError:
            raise ValueError(f"cannot parse window {text!r}") from None
        return cls.of_months(m)

    @property
    def label(self) -> str:
        if self.kind == "history":
            return "history"
        if self.kind == "day0":
            return "0"
        return str(self.months)

    @property
    def sort_key(self) -> tuple[int, int]:
        return {"history": (0, 0), "day0": (1, 0)}.get(self.kind, (2, self.months))

    def admits(self, item_date: dt.date, surgery_date: dt.date) -> bool:
        if self.kind == "history":
            return item_date < surgery_date
        if self.kind == "day0":
            return item_date == surgery_date
        lo = surgery_date - dt.timedelta(days=DAYS_PER_MONTH * self.months)
        return lo <= item_date <= surgery_date

    def __str__(self) -> str:
        return self.label


DEFAULT_WINDOWS = tuple(
    ObservationWindow.parse(w) for w in ("history", "0", "3", "6", "12", "24", "36")
)


@dataclass(frozen=True)
class WindowedRecord:
    surgery: SurgeryEvent
    window: ObservationWindow
    notes: tuple[ClinicalNote, ...]
    encounters: tuple[Encounter, ...]


@dataclass(frozen=True)
class CohortCriteria:
    min_age: int = 18
    max_age: int = 90
    exclude_deceased: bool = True
    require_notes: bool = True
    variable_blacklist: tuple[str, ...] = field(default_factory=default_blacklist)


@dataclass(frozen=True)
class Cohort:
    surgeries: tuple[SurgeryEvent, ...]
    criteria: CohortCriteria
    tally: Mapping[str, int]
    funnel: Mapping[str, int]

    @property
    def patient_ids(self) -> tuple[str, ...]:
        return tuple(sorted({s.patient_id for s in self.surgeries}))


@dataclass(frozen=True)
class SplitAssignment:
    assignment: Mapping[str, str]
    seed: int

    def members(self, split: str) -> list[str]:
        return sorted(p for p, s in self.assignment.items() if s == split)

    def counts(self) -> dict[str, int]:
        c = Counter(self.assignment.values())
        return {s: c.get(s, 0) for s in SPLITS}


# ---------------------------------------------------------------------------
# loading


def _parse_date(value, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(str(value)[:10])
    except ValueError:
        raise CorpusError(f"{where}: bad date {value!r}") from None


def _opt_date(value, where):
    return None if value in (None, "") else _parse_date(value, where)


def _opt_float(value):
    if value is None or value == "":
        return None
    v = float(value)
    return v if math.isfinite(v) else None


def _read_jsonl(path: Path):
    if not path.exists():
        raise CorpusError(f"missing corpus file {path}")
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path.name}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"{path.name}:{lineno}: expected a JSON object")
            yield lineno, obj


def _dropped(name: str, drop: frozenset[str]) -> bool:
    return name.strip().lower() in drop


def load_corpus(directory: str | Path, drop_variables: Iterable[str] = ()) -> Corpus:
    """Read patients/encounters/notes JSONL files into a linked Corpus.

    Variables whose name matches ``drop_variables`` (case-insensitive) are
    removed from labs, vitals, medications, admission info and demographics.
    References to unknown patients are kept and reported in ``warnings``.
    """
    d = Path(directory)
    drop = frozenset(v.strip().lower() for v in drop_variables)
    warnings: list[str] = []

    patients: dict[str, Patient] = {}
    for lineno, o in _read_jsonl(d / "patients.jsonl"):
        where = f"patients.jsonl:{lineno}"
        try:
            pid = str(o["patient_id"])
            if pid in patients:
                raise CorpusError(f"{where}: duplicate patient_id {pid}")
            demo = {
                str(k): str(v)
                for k, v in (o.get("demographics") or {}).items()
                if not _dropped(str(k), drop)
            }
            patients[pid] = Patient(
                patient_id=pid,
                birth_date=_parse_date(o["birth_date"], where),
                sex=str(o.get("sex", "other")).lower(),
                race=str(o.get("race", "Other")),
                death_date=_opt_date(o.get("death_date"), where),
                demographics=demo,
            )
        except KeyError as exc:
            raise CorpusError(f"{where}: missing field {exc.args[0]}") from None

    encounters: dict[str, list[Encounter]] = defaultdict(list)
    for lineno, o in _read_jsonl(d / "encounters.jsonl"):
        where = f"encounters.jsonl:{lineno}"
        try:
            enc = Encounter(
                encounter_id=str(o["encounter_id"]),
                patient_id=str(o["patient_id"]),
                admit_date=_parse_date(o["admit_date"], where),
                discharge_date=_opt_date(o.get("discharge_date"), where),
                setting=str(o.get("setting", "outpatient")).lower(),
                cpt_codes=tuple(str(c) for c in o.get("cpt_codes") or ()),
                diagnoses=tuple(
                    Diagnosis(str(x["code"]), str(x.get("version", "icd10")).lower())
                    for x in o.get("diagnoses") or ()
                ),
                medications=tuple(
                    Medication(
                        str(x.get("name", "")),
                        str(x.get("code", "")),
                        _opt_float(x.get("dose")),
                        str(x.get("unit", "")),
                    )
                    for x in o.get("medications") or ()
                    if not (_dropped(str(x.get("name", "")), drop) or _dropped(str(x.get("code", "")), drop))
                ),
                labs=tuple(
                    Measurement(str(x["code"]), _opt_float(x.get("value")), str(x.get("unit", "")))
                    for x in o.get("labs") or ()
                    if not _dropped(str(x["code"]), drop)
                ),
                vitals=tuple(
                    Measurement(str(x["code"]), _opt_float(x.get("value")), str(x.get("unit", "")))
                    for x in o.get("vitals") or ()
                    if not _dropped(str(x["code"]), drop)
                ),
                admission_info={
                    str(k): str(v)
                    for k, v in (o.get("admission_info") or {}).items()
                    if not _dropped(str(k), drop)
                },
            )
        except KeyError as exc:
            raise CorpusError(f"{where}: missing field {exc.args[0]}") from None
        except CorpusError as exc:
            raise CorpusError(f"{where}: {exc}") from None
        if enc.patient_id not in patients:
            warnings.append(f"{where}: encounter {enc.encounter_id} references unknown patient {enc.patient_id}")
        encounters[enc.patient_id].append(enc)

    notes: dict[str, list[ClinicalNote]] = defaultdict(list)
    for lineno, o in _read_jsonl(d / "notes.jsonl"):
        where = f"notes.jsonl:{lineno}"
        try:
            note = ClinicalNote(
                note_id=str(o["note_id"]),
                patient_id=str(o["patient_id"]),
                date=_parse_date(o["date"], where),
                text=str(o.get("text") or ""),
                empty_ok=bool(o.get("empty_ok", False)),
            )
        except KeyError as exc:
            raise CorpusError(f"{where}: missing field {exc.args[0]}") from None
        except CorpusError as exc:
            raise CorpusError(f"{where}: {exc}") from None
        if note.patient_id not in patients:
            warnings.append(f"{where}: note {note.note_id} references unknown patient {note.patient_id}")
        notes[note.patient_id].append(note)

    for w in warnings:
        log.warning("event=dangling_reference detail=%r", w)

    # sorted() is stable, so same-day items keep file order
    return Corpus(
        patients=patients,
        encounters={k: tuple(sorted(v, key=lambda e: e.admit_date)) for k, v in encounters.items()},
        notes={k: tuple(sorted(v, key=lambda n: n.date)) for k, v in notes.items()},
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# surgeries, cohort, labels


def age_in_years(birth: dt.date, on: dt.date) -> int:
    return on.year - birth.year - ((on.month, on.day) < (birth.month, birth.day))


def identify_surgeries(
    corpus: Corpus,
    hip_cpt: Iterable[str] = HIP_CPT,
    knee_cpt: Iterable[str] = KNEE_CPT,
    tie_rule: str = "both",
) -> list[SurgeryEvent]:
    """One SurgeryEvent per encounter carrying a hip or knee arthroplasty CPT code.

    An encounter with codes from both sets yields two events under the
    default ``tie_rule="both"``; ``"hip"`` or ``"knee"`` keeps only that type.
    """
    hip, knee = frozenset(map(str, hip_cpt)), frozenset(map(str, knee_cpt))
    if not hip or not knee:
        raise ValueError("CPT sets must be non-empty")
    if hip & knee:
        raise ValueError(f"CPT sets overlap: {sorted(hip & knee)}")
    if tie_rule not in ("both", "hip", "knee"):
        raise ValueError(f"unknown tie rule {tie_rule!r}")

    events = []
    for pid in sorted(corpus.encounters):
        patient = corpus.patients.get(pid)
        if patient is None:
            continue
        for enc in corpus.encounters[pid]:
            codes = set(enc.cpt_codes)
            types = [t for t, s in (("hip", hip), ("knee", knee)) if codes & s]
            if len(types) == 2:
                log.info("event=cpt_tie encounter=%s rule=%s", enc.encounter_id, tie_rule)
                if tie_rule != "both":
                    types = [tie_rule]
            for t in types:
                events.append(
                    SurgeryEvent(
                        patient_id=pid,
                        encounter_id=enc.encounter_id,
                        surgery_date=enc.admit_date,
                        surgery_type=t,
                        age_at_surgery=age_in_years(patient.birth_date, enc.admit_date),
                    )
                )
    return events


def exclusion_reason(corpus: Corpus, s: SurgeryEvent, criteria: CohortCriteria) -> str | None:
    p = corpus.patients[s.patient_id]
    if criteria.exclude_deceased and p.death_date is not None:
        return "deceased"
    if s.age_at_surgery < criteria.min_age:
        return "min_age"
    if s.age_at_surgery > criteria.max_age:
        return "max_age"
    if criteria.require_notes and not corpus.notes_of(s.patient_id):
        return "no_notes"
    return None


def build_cohort(
    corpus: Corpus, surgeries: Sequence[SurgeryEvent], criteria: CohortCriteria | None = None
) -> Cohort:
    criteria = criteria or CohortCriteria()
    tally = Counter({k: 0 for k in ("deceased", "min_age", "max_age", "no_notes")})
    kept = []
    for s in surgeries:
        why = exclusion_reason(corpus, s, criteria)
        if why is None:
            kept.append(s)
        else:
            tally[why] += 1
    if not kept:
        raise CohortError(f"cohort is empty after exclusions: {dict(tally)}")

    # patient-level funnel, mirroring the order the exclusions are applied
    by_patient: dict[str, list[str | None]] = defaultdict(list)
    for s in surgeries:
        by_patient[s.patient_id].append(exclusion_reason(corpus, s, criteria))
    stage1 = [p for p, rs in by_patient.items() if any(r in (None, "no_notes") for r in rs)]
    stage2 = [p for p, rs in by_patient.items() if any(r is None for r in rs)]
    funnel = {"patients_with_surgery": len(by_patient), "after_death_age": len(stage1), "after_notes": len(stage2)}
    return Cohort(surgeries=tuple(kept), criteria=criteria, tally=dict(tally), funnel=funnel)


def assign_label(surgery: SurgeryEvent, encounters: Iterable[Encounter], horizon_days: int = 30) -> Label:
    """Positive iff an inpatient admission (not the index encounter) falls in
    (surgery_date, surgery_date + horizon_days]."""
    hits = [
        e
        for e in encounters
        if e.setting == "inpatient"
        and e.encounter_id != surgery.encounter_id
        and 0 < (e.admit_date - surgery.surgery_date).days <= horizon_days
    ]
    if not hits:
        return Label(0)
    first = min(hits, key=lambda e: (e.admit_date, e.encounter_id))
    return Label(1, first.encounter_id)


def label_cohort(corpus: Corpus, cohort: Cohort, horizon_days: int = 30) -> dict[str, Label]:
    return {s.key: assign_label(s, corpus.encounters_of(s.patient_id), horizon_days) for s in cohort.surgeries}


def slice_window(corpus: Corpus, surgery: SurgeryEvent, window: ObservationWindow) -> WindowedRecord:
    if surgery.patient_id not in corpus.patients:
        raise KeyError(f"surgery patient {surgery.patient_id} not in corpus")
    d = surgery.surgery_date
    return WindowedRecord(
        surgery=surgery,
        window=window,
        notes=tuple(n for n in corpus.notes_of(surgery.patient_id) if window.admits(n.date, d)),
        encounters=tuple(e for e in corpus.encounters_of(surgery.patient_id) if window.admits(e.admit_date, d)),
    )


# ---------------------------------------------------------------------------
# splitting


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    counts = [math.floor(r * n + 1e-9) for r in ratios]
    i = 0
    while sum(counts) < n:
        counts[i % len(counts)] += 1
        i += 1
    return counts


def split_cohort(
    cohort: Cohort,
    ratios: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
    labels: Mapping[str, Label] | None = None,
    stratify: bool = False,
) -> SplitAssignment:
    """Patient-level train/validation/test split.

    Split sizes are floor(ratio*N) with leftovers handed out in
    train, validation, test order. With ``stratify`` patients are ordered by
    (surgery type, label) stratum before a proportional sequential
    allocation, so every stratum is spread across splits in ratio.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"split ratios must be three non-negative values summing to 1, got {ratios}")
    pids = list(cohort.patient_ids)
    n = len(pids)
    if n < 3:
        raise ValueError(f"need at least 3 patients to split, got {n}")
    targets = _allocate(n, ratios)
    rng = np.random.default_rng(seed)
    order = [pids[i] for i in rng.permutation(n)]

    if not stratify:
        out, start = {}, 0
        for split, c in zip(SPLITS, targets):
            for p in order[start : start + c]:
                out[p] = split
            start += c
        return SplitAssignment(out, seed)

    first: dict[str, SurgeryEvent] = {}
    for s in sorted(cohort.surgeries, key=lambda s: (s.surgery_date, s.key)):
        first.setdefault(s.patient_id, s)
    positive: dict[str, int] = defaultdict(int)
    for s in cohort.surgeries:
        if labels and s.key in labels:
            positive[s.patient_id] |= labels[s.key].value

    strata = {p: (first[p].surgery_type, positive[p]) for p in order}
    rank = {p: i for i, p in enumerate(order)}
    ordered = sorted(order, key=lambda p: (strata[p], rank[p]))
    assigned = [0, 0, 0]
    out = {}
    for j, p in enumerate(ordered, 1):
        # largest deficit against the ideal running allocation; capped by targets
        deficits = [
            (targets[k] * j / n - assigned[k]) if assigned[k] < targets[k] else -math.inf for k in range(3)
        ]
        k = int(np.argmax(deficits))
        assigned[k] += 1
        out[p] = SPLITS[k]
    return SplitAssignment(out, seed)


# ---------------------------------------------------------------------------
# demographics


def demographic_summary(corpus: Corpus, cohort: Cohort, split: SplitAssignment) -> list[dict]:
    """Per split and sex: counts, age order statistics and race shares.

    Age is the patient's age at their first cohort surgery.
    """
    age: dict[str, int] = {}
    for s in sorted(cohort.surgeries, key=lambda s: s.surgery_date):
        age.setdefault(s.patient_id, s.age_at_surgery)
    rows = []
    races = sorted({corpus.patients[p].race for p in age})
    for name in SPLITS:
        members = [p for p in split.members(name) if p in age]
        total = len(members)
        for sex in sorted({corpus.patients[p].sex for p in members}):
            group = [p for p in members if corpus.patients[p].sex == sex]
            a = np.array([age[p] for p in group], dtype=float)
            row = {
                "split": name,
                "sex": sex,
                "n": len(group),
                "pct": 100.0 * len(group) / total if total else 0.0,
                "age_min": float(a.min()),
                "age_q1": float(np.percentile(a, 25)),
                "age_median": float(np.median(a)),
                "age_mean": float(a.mean()),
                "age_q3": float(np.percentile(a, 75)),
                "age_max": float(a.max()),
            }
            rc = Counter(corpus.patients[p].race for p in group)
            for r in races:
                row[f"race:{r}"] = 100.0 * rc.get(r, 0) / len(group)
            rows.append(row)
    return rows


def format_demographics(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0].keys())
    for r in rows[1:]:
        keys.extend(k for k in r if k not in keys)
    lines = ["\t".join(keys)]
    for r in rows:
        cells = []
        for k in keys:
            v = r.get(k, "")
            cells.append(f"{v:.2f}" if isinstance(v, float) else str(v))
        lines.append("\t".join(cells))
    return "\n".join(lines)
