"""Labelled, split examples and their per-window documents and encounter lists."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .ehr import (
    Cohort,
    CohortCriteria,
    Corpus,
    Encounter,
    Label,
    ObservationWindow,
    SplitAssignment,
    SurgeryEvent,
    build_cohort,
    identify_surgeries,
    label_cohort,
    slice_window,
    split_cohort,
)
from .text import (
    DEFAULT_SCHEMA,
    DEFAULT_TIME_SENSITIVE,
    NOTE_BREAK,
    TokenizedNote,
    concat_notes,
    structured_to_text,
    tokenize_note,
)

TASKS = ("hip", "knee")
SOURCES = ("notes", "structured", "both")


@dataclass(frozen=True)
class Example:
    key: str
    task: str
    label: int
    split: str
    surgery: SurgeryEvent


@dataclass
class Dataset:
    corpus: Corpus
    cohort: Cohort
    labels: Mapping[str, Label]
    split: SplitAssignment
    examples: tuple[Example, ...]
    schema: Mapping[str, Sequence[str]] = field(default_factory=lambda: DEFAULT_SCHEMA)
    time_sensitive: frozenset[str] = DEFAULT_TIME_SENSITIVE
    _tokens: dict = field(default_factory=dict, repr=False)

    def select(self, task: str | None = None, split: str | None = None) -> list[Example]:
        return [e for e in self.examples if (task is None or e.task == task) and (split is None or e.split == split)]

    def note_tokens(self, note) -> TokenizedNote:
        toks = self._tokens.get(note.note_id)
        if toks is None:
            toks = self._tokens[note.note_id] = tokenize_note(note)
        return toks

    def encounters(self, ex: Example, window: ObservationWindow) -> tuple[Encounter, ...]:
        return slice_window(self.corpus, ex.surgery, window).encounters

    def document(self, ex: Example, window: ObservationWindow, source: str) -> tuple[str, ...]:
        """Token sequence of one example under ``window`` for a text encoder."""
        rec = slice_window(self.corpus, ex.surgery, window)
        if source not in SOURCES:
            raise ValueError(f"unknown data source {source!r}")
        notes: tuple[str, ...] = ()
        if source in ("notes", "both"):
            notes = concat_notes([self.note_tokens(n) for n in rec.notes]).tokens
        if source == "notes":
            return notes
        struct = tuple(structured_to_text(rec.encounters, self.schema, self.time_sensitive))
        if source == "structured":
            return struct
        if notes and struct:
            return notes + (NOTE_BREAK,) + struct
        return notes or struct


def prepare_dataset(
    corpus: Corpus,
    criteria: CohortCriteria | None = None,
    ratios: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
    stratify: bool = False,
    hip_cpt: Iterable[str] | None = None,
    knee_cpt: Iterable[str] | None = None,
    tie_rule: str = "both",
    horizon_days: int = 30,
) -> Dataset:
    kw = {}
    if hip_cpt is not None:
        kw["hip_cpt"] = hip_cpt
    if knee_cpt is not None:
        kw["knee_cpt"] = knee_cpt
    surgeries = identify_surgeries(corpus, tie_rule=tie_rule, **kw)
    cohort = build_cohort(corpus, surgeries, criteria)
    labels = label_cohort(corpus, cohort, horizon_days)
    split = split_cohort(cohort, ratios, seed, labels=labels, stratify=stratify)
    examples = tuple(
        sorted(
            (
                Example(s.key, s.surgery_type, labels[s.key].value, split.assignment[s.patient_id], s)
                for s in cohort.surgeries
            ),
            key=lambda e: e.key,
        )
    )
    return Dataset(corpus, cohort, labels, split, examples)
