import datetime as dt
from collections import Counter

import numpy as np
import pytest

from builders import DAY0, HIP, KNEE, corpus, day, encounter, note, patient
from windowbench.ehr import (
    DEFAULT_WINDOWS,
    CohortCriteria,
    CohortError,
    CorpusError,
    Label,
    ObservationWindow,
    SurgeryEvent,
    assign_label,
    build_cohort,
    identify_surgeries,
    label_cohort,
    load_corpus,
    slice_window,
    split_cohort,
)
from windowbench.synth import SynthConfig, generate


def _surgery(pid="P1", eid="E0"):
    return SurgeryEvent(pid, eid, DAY0, "hip", 66)


# ---------------------------------------------------------------- labels


@pytest.mark.parametrize("offset,expected", [(1, 1), (29, 1), (30, 1), (31, 0), (45, 0)])
def test_label_boundary_days(offset, expected):
    s = _surgery()
    encs = [encounter("E0", "P1", 0, "inpatient", cpt=[HIP]), encounter("E1", "P1", offset, "inpatient")]
    assert assign_label(s, encs).value == expected


def test_label_ignores_outpatient_index_and_same_day():
    s = _surgery()
    encs = [
        encounter("E0", "P1", 0, "inpatient", cpt=[HIP]),
        encounter("E1", "P1", 10, "outpatient"),
        encounter("E2", "P1", 0, "inpatient"),
        encounter("E3", "P1", -5, "inpatient"),
    ]
    lab = assign_label(s, encs)
    assert lab.value == 0 and lab.readmit_encounter_id is None


def test_label_reports_first_readmission():
    s = _surgery()
    encs = [encounter("E0", "P1", 0, "inpatient"), encounter("E7", "P1", 20, "inpatient"),
            encounter("E5", "P1", 12, "inpatient")]
    assert assign_label(s, encs).readmit_encounter_id == "E5"


def test_label_horizon_is_configurable():
    s = _surgery()
    encs = [encounter("E1", "P1", 45, "inpatient")]
    assert assign_label(s, encs, horizon_days=30).value == 0
    assert assign_label(s, encs, horizon_days=60).value == 1


# ---------------------------------------------------------------- windows


def test_window_parse_and_labels():
    assert [w.label for w in DEFAULT_WINDOWS] == ["history", "0", "3", "6", "12", "24", "36"]
    assert ObservationWindow.parse("day_of_surgery") == ObservationWindow.parse(0)
    with pytest.raises(ValueError):
        ObservationWindow.parse("-3")
    with pytest.raises(ValueError):
        ObservationWindow.parse("weekly")


def test_window_bounds_exact():
    w3 = ObservationWindow.parse("3")
    assert w3.admits(day(-90), DAY0) and w3.admits(DAY0, DAY0)
    assert not w3.admits(day(-91), DAY0) and not w3.admits(day(1), DAY0)
    hist = ObservationWindow.history_only()
    assert hist.admits(day(-4000), DAY0) and not hist.admits(DAY0, DAY0)
    d0 = ObservationWindow.day_of_surgery()
    assert d0.admits(DAY0, DAY0) and not d0.admits(day(-1), DAY0)


def test_window_nesting_on_random_surgeries():
    rng = np.random.default_rng(11)
    nested = [ObservationWindow.parse(w) for w in ("0", "3", "6", "12", "24", "36")]
    for k in range(100):
        pid = f"P{k}"
        offsets = rng.integers(-1500, 40, size=int(rng.integers(0, 30)))
        notes = [note(f"N{k}-{i}", pid, int(o), "text") for i, o in enumerate(offsets)]
        encs = [encounter(f"E{k}-{i}", pid, int(o)) for i, o in enumerate(rng.integers(-1500, 40, size=10))]
        c = corpus([patient(pid)], encs, notes)
        s = SurgeryEvent(pid, "X", DAY0, "knee", 60)
        prev: Counter = Counter()
        for w in nested:
            rec = slice_window(c, s, w)
            cur = Counter(n.note_id for n in rec.notes) + Counter(e.encounter_id for e in rec.encounters)
            assert not (prev - cur), f"window {w.label} lost items of the shorter window"
            # oracle: direct day arithmetic
            lo = 0 if w.kind == "day0" else 30 * w.months
            want = sum(1 for o in offsets if -lo <= o <= 0)
            assert len(rec.notes) == want
            prev = cur


# ---------------------------------------------------------------- surgeries and cohort


def _small_corpus():
    pats = [
        patient("A", 60),
        patient("B", 95),
        patient("C", 70, death=day(200)),
        patient("D", 55),
        patient("E", 17),
        patient("F", 80),
    ]
    encs = [
        encounter("A0", "A", 0, "inpatient", cpt=[HIP]),
        encounter("A1", "A", 400, "inpatient", cpt=[KNEE]),
        encounter("B0", "B", 0, "inpatient", cpt=[KNEE]),
        encounter("C0", "C", 0, "inpatient", cpt=[HIP]),
        encounter("D0", "D", 0, "inpatient", cpt=[KNEE]),
        encounter("E0", "E", 0, "inpatient", cpt=[HIP]),
        encounter("F0", "F", 0, "inpatient", cpt=[HIP, KNEE]),
        encounter("F1", "F", 10, "inpatient"),
    ]
    notes = [note("nA", "A", -3, "hip pain"), note("nB", "B", -3, "knee"), note("nC", "C", -3, "x"),
             note("nE", "E", -3, "x"), note("nF", "F", -3, "x")]
    return corpus(pats, encs, notes)


def test_identify_surgeries_and_tie_rule():
    c = _small_corpus()
    both = identify_surgeries(c)
    assert sorted(s.key for s in both) == sorted(
        ["A/A0/hip", "A/A1/knee", "B/B0/knee", "C/C0/hip", "D/D0/knee", "E/E0/hip", "F/F0/hip", "F/F0/knee"]
    )
    assert [s.surgery_type for s in identify_surgeries(c, tie_rule="knee") if s.patient_id == "F"] == ["knee"]
    with pytest.raises(ValueError):
        identify_surgeries(c, hip_cpt=["1"], knee_cpt=["1"])


def test_cohort_exclusions_and_tally():
    c = _small_corpus()
    co = build_cohort(c, identify_surgeries(c), CohortCriteria())
    assert sorted(s.key for s in co.surgeries) == ["A/A0/hip", "A/A1/knee", "F/F0/hip", "F/F0/knee"]
    assert co.tally == {"deceased": 1, "min_age": 1, "max_age": 1, "no_notes": 1}
    assert co.funnel == {"patients_with_surgery": 6, "after_death_age": 3, "after_notes": 2}
    # every member satisfies every criterion when re-checked
    for s in co.surgeries:
        p = c.patients[s.patient_id]
        assert p.death_date is None and 18 <= s.age_at_surgery <= 90 and c.notes_of(s.patient_id)
    labels = label_cohort(c, co)
    assert labels["F/F0/hip"].value == 1 and labels["A/A0/hip"].value == 0


def test_empty_cohort_is_an_error():
    c = _small_corpus()
    with pytest.raises(CohortError):
        build_cohort(c, identify_surgeries(c), CohortCriteria(min_age=100, max_age=120))


# ---------------------------------------------------------------- splits


def _cohort_of(n, surgeries_per_patient=1):
    pats, encs, notes = [], [], []
    for i in range(n):
        pid = f"P{i:03d}"
        pats.append(patient(pid, 60))
        for k in range(surgeries_per_patient):
            encs.append(encounter(f"{pid}-{k}", pid, 100 * k, "inpatient", cpt=[HIP if k % 2 == 0 else KNEE]))
        notes.append(note(f"n{pid}", pid, -1, "x"))
    c = corpus(pats, encs, notes)
    return c, build_cohort(c, identify_surgeries(c))


def test_split_counts_exact_on_100():
    _, co = _cohort_of(100)
    sp = split_cohort(co, (0.70, 0.15, 0.15), seed=3)
    assert sp.counts() == {"train": 70, "validation": 15, "test": 15}
    members = [set(sp.members(s)) for s in ("train", "validation", "test")]
    assert not (members[0] & members[1]) and not (members[0] & members[2]) and not (members[1] & members[2])
    assert set().union(*members) == set(co.patient_ids)


def test_split_leftovers_follow_train_validation_test_order():
    _, co = _cohort_of(11)
    # floor(7.7)=7, floor(1.65)=1, floor(1.65)=1 -> two leftovers to train then validation
    assert split_cohort(co, seed=0).counts() == {"train": 8, "validation": 2, "test": 1}


def test_split_is_patient_level_with_repeat_surgeries():
    c, co = _cohort_of(40, surgeries_per_patient=3)
    sp = split_cohort(co, seed=5)
    assert len(co.surgeries) == 120
    for s in co.surgeries:
        assert s.patient_id in sp.assignment
    assert sum(sp.counts().values()) == 40


def test_split_deterministic_and_seed_sensitive():
    _, co = _cohort_of(60)
    a, b, c = split_cohort(co, seed=1), split_cohort(co, seed=1), split_cohort(co, seed=2)
    assert a.assignment == b.assignment and a.assignment != c.assignment


def test_stratified_split_keeps_counts_and_spreads_strata():
    _, co = _cohort_of(100)
    labels = {s.key: Label(1, f"R{i}") if i % 5 == 0 else Label(0) for i, s in enumerate(co.surgeries)}
    sp = split_cohort(co, seed=4, labels=labels, stratify=True)
    assert sp.counts() == {"train": 70, "validation": 15, "test": 15}
    pos = Counter(sp.assignment[s.patient_id] for s in co.surgeries if labels[s.key].value)
    assert pos == {"train": 14, "validation": 3, "test": 3}


def test_bad_ratios_rejected():
    _, co = _cohort_of(10)
    with pytest.raises(ValueError):
        split_cohort(co, (0.5, 0.5, 0.5))


# ---------------------------------------------------------------- loading


def test_load_corpus_round_trip(tmp_path):
    generate(SynthConfig(n_patients=30, seed=2), tmp_path)
    c = load_corpus(tmp_path)
    n_p, n_e, n_n = c.counts
    assert n_p == 30
    lines = [sum(1 for _ in open(tmp_path / f)) for f in ("patients.jsonl", "encounters.jsonl", "notes.jsonl")]
    assert (n_p, n_e, n_n) == tuple(lines)
    for pid, encs in c.encounters.items():
        assert all(a.admit_date <= b.admit_date for a, b in zip(encs, encs[1:]))


def test_load_corpus_drops_variables_and_reports_missing(tmp_path):
    generate(SynthConfig(n_patients=20, seed=4), tmp_path)
    full = load_corpus(tmp_path)
    labs = {m.code for es in full.encounters.values() for e in es for m in e.labs}
    victim = sorted(labs)[0]
    dropped = load_corpus(tmp_path, drop_variables=[victim.upper()])
    assert victim not in {m.code for es in dropped.encounters.values() for e in es for m in e.labs}
    (tmp_path / "notes.jsonl").unlink()
    with pytest.raises(CorpusError, match="notes.jsonl"):
        load_corpus(tmp_path)


def test_encounter_validation():
    with pytest.raises(CorpusError):
        encounter("E", "P", 0, "emergency")
    with pytest.raises(CorpusError):
        patient("P", 60, death=dt.date(1900, 1, 1))


def test_stratified_split_prevalence_within_two_points():
    _, co = _cohort_of(400)
    rng = np.random.default_rng(9)
    pos = rng.random(len(co.surgeries)) < 0.12
    labels = {s.key: Label(1, f"R{i}") if p else Label(0) for i, (s, p) in enumerate(zip(co.surgeries, pos))}
    sp = split_cohort(co, seed=1, labels=labels, stratify=True)
    overall = pos.mean()
    for split in ("train", "validation", "test"):
        members = set(sp.members(split))
        vals = [labels[s.key].value for s in co.surgeries if s.patient_id in members]
        assert abs(np.mean(vals) - overall) <= 0.02
