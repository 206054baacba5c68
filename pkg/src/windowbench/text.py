"""Tokenization, note concatenation, vocabularies and structured-to-text rendering."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .ehr import ClinicalNote, Encounter
from .porter import stem

NUM = "<num>"
NOTE_BREAK = "<note_break>"

_ALNUM_RUN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Split on runs of non-alphanumeric characters, lowercase, map digit-only tokens to ``<num>``."""
    return [NUM if t.isdigit() else t.lower() for t in _ALNUM_RUN.findall(text)]


def stem_tokens(tokens: Iterable[str]) -> list[str]:
    # a stem can collapse to "" (e.g. "s"); keep the surface form instead
    return [stem(t) or t for t in tokens]


def process_note(text: str) -> list[str]:
    return stem_tokens(tokenize(text))


@dataclass(frozen=True)
class TokenizedNote:
    note_id: str
    tokens: tuple[str, ...]

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Document:
    key: str
    tokens: tuple[str, ...]

    @property
    def length(self) -> int:
        return len(self.tokens)


def tokenize_note(note: ClinicalNote) -> TokenizedNote:
    return TokenizedNote(note.note_id, tuple(process_note(note.text)))


def concat_notes(notes: Sequence[TokenizedNote], delimiter: str = NOTE_BREAK, key: str = "") -> Document:
    """Join date-ordered notes with one delimiter between consecutive notes."""
    out: list[str] = []
    for i, n in enumerate(notes):
        if i:
            out.append(delimiter)
        out.extend(n.tokens)
    return Document(key, tuple(out))


# ---------------------------------------------------------------------------
# vocabulary


class VocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    df: tuple[int, ...]
    min_df: int = 5
    max_size: int | None = 50_000
    fitted_on: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @property
    def index(self) -> Mapping[str, int]:
        return self._index  # type: ignore[attr-defined]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def get(self, token: str) -> int | None:
        return self.index.get(token)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        idx = self.index
        return [idx[t] for t in tokens if t in idx]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()[:16]

    def dump_tsv(self, path: str | Path) -> None:
        lines = ["token\tindex\tdf"] + [f"{t}\t{i}\t{d}" for i, (t, d) in enumerate(zip(self.tokens, self.df))]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load_tsv(cls, path: str | Path, min_df: int = 1, max_size: int | None = None) -> Vocabulary:
        rows = Path(path).read_text(encoding="utf-8").splitlines()[1:]
        parsed = sorted((int(i), t, int(d)) for t, i, d in (r.split("\t") for r in rows if r))
        if [i for i, _, _ in parsed] != list(range(len(parsed))):
            raise VocabularyError(f"{path}: indices are not dense")
        return cls(tuple(t for _, t, _ in parsed), tuple(d for _, _, d in parsed), min_df, max_size)


def build_vocab(
    documents: Iterable[Sequence[str]],
    min_df: int = 5,
    max_size: int | None = 50_000,
    reserved: Sequence[str] = (NOTE_BREAK,),
    fitted_on: str = "train",
) -> Vocabulary:
    """Vocabulary of tokens with document frequency >= ``min_df``.

    Ranked by (df descending, token ascending) and cut at ``max_size``.
    Reserved tokens seen in any document are kept regardless of pruning so
    that document structure survives encoding.
    """
    df: Counter[str] = Counter()
    for doc in documents:
        df.update(set(doc))
    kept = [t for t, c in df.items() if c >= min_df and t not in reserved]
    kept.sort(key=lambda t: (-df[t], t))
    present = [t for t in reserved if t in df]
    if max_size is not None:
        kept = kept[: max(max_size - len(present), 0)]
    kept.extend(present)
    if not [t for t in kept if t not in reserved]:
        raise VocabularyError(f"empty vocabulary (min_df={min_df})")
    return Vocabulary(tuple(kept), tuple(df.get(t, 0) for t in kept), min_df, max_size, fitted_on)


# ---------------------------------------------------------------------------
# structured data rendered as tokens

DEFAULT_SCHEMA: Mapping[str, tuple[str, ...]] = {
    "encounter": ("setting",),
    "admission": ("*",),
    "diagnosis": ("code",),
    "medication": ("name",),
    "lab": ("code",),
    "vital": ("code",),
}
DEFAULT_TIME_SENSITIVE = frozenset({"encounter", "admission", "diagnosis"})


def _render(table: str, fld: str, value) -> str:
    v = str(value).strip().lower().replace(" ", "_")
    return f"{table}.{fld}.{v}"


def _encounter_tokens(enc: Encounter, schema: Mapping[str, Sequence[str]]) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    rows = {
        "encounter": [{"setting": enc.setting}],
        "admission": [dict(enc.admission_info)],
        "diagnosis": [{"code": d.code, "version": d.version} for d in enc.diagnoses],
        "medication": [{"name": m.name, "code": m.code} for m in enc.medications],
        "lab": [{"code": m.code} for m in enc.labs],
        "vital": [{"code": m.code} for m in enc.vitals],
    }
    for table, fields in schema.items():
        toks = []
        for row in rows.get(table, ()):
            names = sorted(row) if "*" in fields else fields
            toks.extend(_render(table, f, row[f]) for f in names if row.get(f) not in (None, ""))
        out[table] = toks
    return out


def structured_to_text(
    encounters: Sequence[Encounter],
    schema: Mapping[str, Sequence[str]] = DEFAULT_SCHEMA,
    time_sensitive_tables: Iterable[str] = DEFAULT_TIME_SENSITIVE,
) -> list[str]:
    """Render categorical fields as ``table.field.value`` tokens.

    Time-sensitive tables keep encounter-date order; the rest form a sorted
    trailing block.
    """
    ts = frozenset(time_sensitive_tables)
    ordered: list[str] = []
    trailing: list[str] = []
    for enc in sorted(encounters, key=lambda e: e.admit_date):
        per_table = _encounter_tokens(enc, schema)
        for table in schema:
            (ordered if table in ts else trailing).extend(per_table[table])
    return ordered + sorted(trailing)
