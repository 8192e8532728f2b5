import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fnmr_audit.data import (
    DataError,
    DecisionRecord,
    GroupDataset,
    StudyDataset,
    from_records,
    ingest_csv,
    ingest_json,
    load_study,
    write_csv,
    write_json,
)
from fnmr_audit.estimators import estimate_fnmr
from fnmr_audit.simulation import generate_study

from conftest import make_study


def write_text(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_ingest_small_file(tmp_path):
    p = write_text(tmp_path, "subject_id,group_id,attempt_index,decision\n"
                             "s1,A,1,1\ns1,A,2,0\ns2,A,1,0\ns2,A,2,0\n")
    study = ingest_csv(p)
    assert study.G == 1
    assert study.N == 4
    assert estimate_fnmr(study["A"]) == 0.25
    assert study["A"].subjects == [("s1", (1, 0)), ("s2", (0, 0))]


def test_ingest_orders_attempts(tmp_path):
    p = write_text(tmp_path, "subject_id,group_id,attempt_index,decision\n"
                             "s1,A,3,1\ns1,A,1,0\ns1,A,2,0\n")
    assert ingest_csv(p)["A"].subjects == [("s1", (0, 0, 1))]


def test_cross_group_subject(tmp_path):
    p = write_text(tmp_path, "subject_id,group_id,attempt_index,decision\n"
                             "s1,A,1,1\ns1,B,2,0\n")
    with pytest.raises(DataError, match="'s1'"):
        ingest_csv(p)


@pytest.mark.parametrize("row, msg", [
    ("s1,A,1,2", "row 3"),
    ("s1,A,1,x", "row 3"),
    ("s1,A,,1", "row 3: missing attempt_index"),
    ("s1,A,0,1", "row 3"),
])
def test_malformed_row_named(tmp_path, row, msg):
    p = write_text(tmp_path, "subject_id,group_id,attempt_index,decision\ns0,A,1,0\n" + row + "\n")
    with pytest.raises(DataError, match=msg):
        ingest_csv(p)


def test_duplicate_attempt(tmp_path):
    p = write_text(tmp_path, "subject_id,group_id,attempt_index,decision\ns1,A,1,0\ns1,A,1,1\n")
    with pytest.raises(DataError, match="duplicate attempt"):
        ingest_csv(p)


@pytest.mark.parametrize("text", ["", "subject_id,group_id,attempt_index,decision\n"])
def test_empty_file(tmp_path, text):
    with pytest.raises(DataError):
        ingest_csv(write_text(tmp_path, text))


def test_missing_column(tmp_path):
    p = write_text(tmp_path, "subject_id,group_id,decision\ns1,A,1\n")
    with pytest.raises(DataError, match="attempt_index"):
        ingest_csv(p)


def test_schema_mapping(tmp_path):
    p = write_text(tmp_path, "person,demo,try,fnm\np1,X,1,1\np2,Y,1,0\n")
    study = ingest_csv(p, {"subject_id": "person", "group_id": "demo",
                           "attempt_index": "try", "decision": "fnm"})
    assert study.group_ids == ["X", "Y"]
    assert study.N == 2


def test_empty_study_rejected():
    with pytest.raises(DataError):
        StudyDataset(())


def test_single_record_roundtrip(tmp_path):
    d = from_records([DecisionRecord("s1", "A", 1, 1)])
    write_csv(d, tmp_path / "o.csv")
    assert ingest_csv(tmp_path / "o.csv") == d
    assert (tmp_path / "o.csv").read_text() == "subject_id,group_id,attempt_index,decision\ns1,A,1,1\n"


def test_canonical_sort(tmp_path):
    d = make_study({"B": {"z": [1], "a": [0, 1]}, "A": {"m": [0]}})
    write_csv(d, tmp_path / "o.csv")
    lines = (tmp_path / "o.csv").read_text().splitlines()[1:]
    assert lines == ["m,A,1,0", "a,B,1,0", "a,B,2,1", "z,B,1,1"]


def test_paper_scale_roundtrip(tmp_path):
    study = generate_study([0.1] * 5, 0.15, 400, 3, seed=7)
    assert study.N == 6000
    write_csv(study, tmp_path / "big.csv")
    assert sum(1 for _ in open(tmp_path / "big.csv")) - 1 == 6000
    back = ingest_csv(tmp_path / "big.csv")
    assert back == study
    assert back.N == 6000


def test_json_mirror_roundtrip(tmp_path):
    study = generate_study([0.2, 0.3], 0.1, 20, 2, seed=3)
    write_json(study, tmp_path / "d.json")
    rows = json.loads((tmp_path / "d.json").read_text())
    assert set(rows[0]) == {"subject_id", "group_id", "attempt_index", "decision"}
    assert ingest_json(tmp_path / "d.json") == study
    assert load_study(tmp_path / "d.json") == study


def test_group_invariants():
    with pytest.raises(DataError):
        GroupDataset("A", [0, 1, 2], [3])
    with pytest.raises(DataError):
        GroupDataset("A", [0, 1], [3])
    with pytest.raises(DataError):
        GroupDataset("A", [], [])
    g = GroupDataset("A", [1, 0, 1], [1, 2])
    assert g.errors.tolist() == [1, 1]
    assert not g.decisions.flags.writeable


def test_take_copies_whole_subjects():
    g = GroupDataset.from_subjects("A", [("a", [1, 1, 0]), ("b", [0])])
    r = g.take([1, 0, 1])
    assert r.attempts.tolist() == [1, 3, 1]
    assert r.decisions.tolist() == [0, 1, 1, 0, 0]


datasets = st.dictionaries(
    st.text("abc", min_size=1, max_size=3),
    st.dictionaries(
        st.text("xyz0123", min_size=1, max_size=4),
        st.lists(st.integers(0, 1), min_size=1, max_size=5),
        min_size=1, max_size=5,
    ),
    min_size=1, max_size=4,
)


@settings(max_examples=100, deadline=None)
@given(datasets)
def test_roundtrip_property(tmp_path_factory, groups):
    # subject ids must be unique across groups
    groups = {g: {f"{g}_{s}": v for s, v in subs.items()} for g, subs in groups.items()}
    d = make_study(groups)
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(d, path)
    back = ingest_csv(path)
    assert back == d
    raw_rows = sum(1 for _ in open(path)) - 1
    assert back.N == raw_rows == sum(len(v) for subs in groups.values() for v in subs.values())
