"""One-hot encounter vectors: ICD mapping/truncation, feature dictionary, window aggregation."""

from __future__ import annotations

import csv
import datetime as dt
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .ehr import Encounter
from .features import SparseVector, stack

UNK_ICD = "UNK_ICD"
EMPTY_WINDOW = "window.empty"


class GemTableError(ValueError):
    pass


def load_gem_table(path: str | Path) -> dict[str, str]:
    """Read a ``source_code,target_code`` CSV. Codes are stored without dots."""
    table: dict[str, str] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["source_code", "target_code"]:
            raise GemTableError(f"{path}: header must be 'source_code,target_code'")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 2 or not row[0].strip() or not row[1].strip():
                raise GemTableError(f"{path}:{lineno}: malformed row {row!r}")
            table.setdefault(row[0].strip().replace(".", ""), row[1].strip().replace(".", ""))
    return table


def map_icd9_to_icd10(code: str, gem_table: Mapping[str, str], version: str = "icd9") -> str:
    if version == "icd10":
        return code
    return gem_table.get(code.replace(".", ""), UNK_ICD)


def truncate_icd(code: str) -> str:
    if code == UNK_ICD:
        return code
    return code.replace(".", "")[:3]


@dataclass
class IcdMapper:
    """ICD9->ICD10 lookup that counts codes it could not map."""

    gem_table: Mapping[str, str] = field(default_factory=dict)
    unmapped: Counter = field(default_factory=Counter)

    def __call__(self, code: str, version: str) -> str:
        out = map_icd9_to_icd10(code, self.gem_table, version)
        if out == UNK_ICD:
            self.unmapped[code] += 1
        return truncate_icd(out)


# ---------------------------------------------------------------------------
# feature dictionary

def _norm(s: str) -> str:
    return s.strip().lower()


def encounter_items(
    enc: Encounter, icd: IcdMapper, blacklist: frozenset[str] = frozenset()
) -> tuple[list[str], dict[str, float | None]]:
    """Indicator names and numeric observations (None = missing value) of one encounter.

    Medications, labs, vitals and admission fields named in ``blacklist``
    (lowercase) are skipped.
    """
    ind = [f"enc.setting.{enc.setting}"]
    ind += [f"proc.{c}" for c in enc.cpt_codes]
    ind += [f"dx.{icd(d.code, d.version)}" for d in enc.diagnoses]
    ind += [
        f"med.{m.code or _norm(m.name)}"
        for m in enc.medications
        if _norm(m.name) not in blacklist and _norm(m.code) not in blacklist
    ]
    ind += [
        f"adm.{k}.{_norm(v).replace(' ', '_')}"
        for k, v in sorted(enc.admission_info.items())
        if _norm(k) not in blacklist
    ]
    num: dict[str, float | None] = {}
    for prefix, rows in (("lab", enc.labs), ("vital", enc.vitals)):
        for m in rows:
            if _norm(m.code) in blacklist:
                continue
            ind.append(f"{prefix}.{m.code}")
            slot = f"{prefix}val.{m.code}"
            if m.value is not None:
                prev = num.get(slot)
                num[slot] = m.value if prev is None else max(prev, m.value)
            else:
                num.setdefault(slot, None)
    return ind, num


@dataclass(frozen=True)
class FeatureDictionary:
    names: tuple[str, ...]
    kinds: tuple[str, ...]
    mean: np.ndarray  # per slot; only numeric slots are meaningful
    sd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @property
    def index(self) -> Mapping[str, int]:
        return self._index  # type: ignore[attr-defined]

    def __len__(self) -> int:
        return len(self.names)

    def mask(self, kind: str) -> np.ndarray:
        return np.array([k == kind for k in self.kinds], dtype=bool)

    def dump_tsv(self, path: str | Path) -> None:
        lines = ["feature_name\tindex\tkind"] + [f"{n}\t{i}\t{k}" for i, (n, k) in enumerate(zip(self.names, self.kinds))]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_feature_dictionary(
    train_encounters: Iterable[Encounter],
    icd: IcdMapper | None = None,
    blacklist: Iterable[str] = (),
) -> FeatureDictionary:
    """Dictionary and numeric standardisation statistics from training encounters."""
    icd = icd or IcdMapper()
    bl = frozenset(_norm(b) for b in blacklist)
    indicators: set[str] = set()
    values: dict[str, list[float]] = {}
    for enc in train_encounters:
        ind, num = encounter_items(enc, icd, bl)
        indicators.update(ind)
        for slot, v in num.items():
            values.setdefault(slot, [])
            if v is not None:
                values[slot].append(v)
    names, kinds = [], []
    for n in sorted(indicators):
        names.append(n)
        kinds.append("indicator")
    for slot in sorted(values):
        names += [slot, f"{slot}.missing"]
        kinds += ["numeric", "missing_flag"]
    names.append(EMPTY_WINDOW)
    kinds.append("indicator")

    mean = np.zeros(len(names))
    sd = np.ones(len(names))
    for i, (n, k) in enumerate(zip(names, kinds)):
        if k == "numeric" and values[n]:
            v = np.asarray(values[n])
            mean[i] = v.mean()
            s = v.std()
            sd[i] = s if s > 0 else 1.0
    return FeatureDictionary(tuple(names), tuple(kinds), mean, sd)


@dataclass(frozen=True)
class EncounterFeatureVector:
    vector: SparseVector
    date: dt.date
    observed: frozenset[int]  # numeric slots holding a recorded value
    unseen: int = 0


def encode_encounter(enc: Encounter, dictionary: FeatureDictionary, icd: IcdMapper | None = None) -> EncounterFeatureVector:
    icd = icd or IcdMapper()
    idx = dictionary.index
    ind, num = encounter_items(enc, icd)
    entries: dict[int, float] = {}
    unseen = 0
    for name in ind:
        j = idx.get(name)
        if j is None:
            unseen += 1
        else:
            entries[j] = 1.0
    observed = set()
    for slot, v in num.items():
        j = idx.get(slot)
        if j is None:
            unseen += 1
            continue
        if v is None:
            entries[idx[f"{slot}.missing"]] = 1.0
        else:
            entries[j] = (v - dictionary.mean[j]) / dictionary.sd[j]
            observed.add(j)
    return EncounterFeatureVector(SparseVector.from_dict(len(dictionary), entries), enc.admit_date, frozenset(observed), unseen)


def aggregate_encounters(vectors: Sequence[EncounterFeatureVector], dictionary: FeatureDictionary) -> SparseVector:
    """Window summary: max of indicators and missing flags, mean of observed numerics.

    An empty window yields the zero vector with the ``window.empty`` flag set.
    """
    dim = len(dictionary)
    if not vectors:
        return SparseVector.from_dict(dim, {dictionary.index[EMPTY_WINDOW]: 1.0})
    if any(v.vector.dim != dim for v in vectors):
        raise ValueError("encounter vectors do not share the dictionary dimension")
    # indicator and missing-flag entries are all 1, so their max is a union
    present: set[int] = set()
    sums: dict[int, float] = {}
    counts: Counter[int] = Counter()
    for v in vectors:
        stored = dict(zip(v.vector.indices.tolist(), v.vector.values.tolist()))
        present.update(j for j in stored if j not in v.observed)
        for j in v.observed:
            sums[j] = sums.get(j, 0.0) + stored.get(j, 0.0)
            counts[j] += 1
    entries = {j: 1.0 for j in present}
    entries.update({j: sums[j] / counts[j] for j in sums})
    return SparseVector.from_dict(dim, entries)


def structured_matrix(
    windows: Sequence[Sequence[Encounter]], dictionary: FeatureDictionary, icd: IcdMapper | None = None
) -> sp.csr_matrix:
    icd = icd or IcdMapper()
    rows = [aggregate_encounters([encode_encounter(e, dictionary, icd) for e in encs], dictionary) for encs in windows]
    return stack(rows, len(dictionary))
