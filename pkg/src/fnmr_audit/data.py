"""Decision-level data model and CSV/JSON ingestion.

A study is a set of demographic groups; each group holds, per subject, the
vector of thresholded genuine-comparison decisions (1 = false non-match).
Scores are never stored: thresholding happens upstream of this package.

Every estimator assumes the matching process is stationary within a group
and that one fixed threshold was applied per group. Neither property can be
checked from decisions alone, so they are documented, not validated.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

CANONICAL_COLUMNS = ("subject_id", "group_id", "attempt_index", "decision")


class DataError(ValueError):
    """Raised when decision data violates the data model."""


@dataclass(frozen=True)
class DecisionRecord:
    subject_id: str
    group_id: str
    attempt_index: int
    decision: int

    def __post_init__(self):
        if self.decision not in (0, 1):
            raise DataError(f"decision must be 0 or 1, got {self.decision!r}")
        if self.attempt_index < 1:
            raise DataError(f"attempt_index must be >= 1, got {self.attempt_index}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GroupDataset:
    """All decisions for one group, stored flat with per-subject attempt counts.

    ``decisions`` is the concatenation of every subject's decision vector in
    subject order; ``attempts[i]`` is m_i. ``subject_ids`` may be omitted for
    synthetic data, in which case ids of the form ``<group_id>-s<i>`` (zero
    padded) are generated on demand.
    """

    group_id: str
    decisions: np.ndarray
    attempts: np.ndarray
    _subject_ids: tuple[str, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        dec = np.ascontiguousarray(self.decisions, dtype=np.int8).ravel()
        att = np.ascontiguousarray(self.attempts, dtype=np.int64).ravel()
        if att.size < 1:
            raise DataError(f"group {self.group_id!r} has no subjects")
        if np.any(att < 1):
            raise DataError(f"group {self.group_id!r} has a subject with no decisions")
        if int(att.sum()) != dec.size:
            raise DataError(
                f"group {self.group_id!r}: attempt counts sum to {int(att.sum())} "
                f"but {dec.size} decisions were given"
            )
        if dec.size and (dec.min() < 0 or dec.max() > 1):
            raise DataError(f"group {self.group_id!r} has non-binary decisions")
        if self._subject_ids is not None:
            ids = tuple(str(s) for s in self._subject_ids)
            if len(ids) != att.size:
                raise DataError(f"group {self.group_id!r}: {len(ids)} ids for {att.size} subjects")
            if len(set(ids)) != len(ids):
                raise DataError(f"group {self.group_id!r} has duplicate subject ids")
            object.__setattr__(self, "_subject_ids", ids)
        object.__setattr__(self, "group_id", str(self.group_id))
        object.__setattr__(self, "decisions", _readonly(dec))
        object.__setattr__(self, "attempts", _readonly(att))

    @classmethod
    def from_subjects(
        cls, group_id: str, subjects: Iterable[tuple[str, Sequence[int]]]
    ) -> "GroupDataset":
        """Build from ``(subject_id, decision_vector)`` pairs, sorted by subject id."""
        pairs = sorted(((str(s), list(v)) for s, v in subjects), key=lambda p: p[0])
        if not pairs:
            raise DataError(f"group {group_id!r} has no subjects")
        flat = [d for _, v in pairs for d in v]
        return cls(
            group_id,
            np.array(flat, dtype=np.int8),
            np.array([len(v) for _, v in pairs], dtype=np.int64),
            tuple(s for s, _ in pairs),
        )

    @classmethod
    def from_matrix(cls, group_id: str, matrix) -> "GroupDataset":
        """Balanced design: ``matrix[i, j]`` is decision j of subject i."""
        mat = np.asarray(matrix)
        if mat.ndim != 2:
            raise DataError("decision matrix must be 2-D (subjects x attempts)")
        return cls(group_id, mat.ravel(), np.full(mat.shape[0], mat.shape[1]))

    @property
    def subject_ids(self) -> tuple[str, ...]:
        if self._subject_ids is None:
            width = len(str(self.n_subjects - 1))
            object.__setattr__(
                self, "_subject_ids", tuple(f"{self.group_id}-s{i:0{width}d}" for i in range(self.n_subjects))
            )
        return self._subject_ids

    @property
    def n_subjects(self) -> int:
        return int(self.attempts.size)

    @property
    def n_decisions(self) -> int:
        return int(self.decisions.size)

    @cached_property
    def offsets(self) -> np.ndarray:
        return _readonly(np.concatenate(([0], np.cumsum(self.attempts))))

    @cached_property
    def errors(self) -> np.ndarray:
        """Per-subject error counts e_i."""
        return _readonly(np.add.reduceat(self.decisions.astype(np.int64), self.offsets[:-1]))

    def subject_decisions(self, i: int) -> np.ndarray:
        return self.decisions[self.offsets[i] : self.offsets[i + 1]]

    @property
    def subjects(self) -> list[tuple[str, tuple[int, ...]]]:
        return [
            (sid, tuple(int(d) for d in self.subject_decisions(i)))
            for i, sid in enumerate(self.subject_ids)
        ]

    def take(self, indices) -> "GroupDataset":
        """New group whose slot i is a full copy of subject ``indices[i]``."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_subjects):
            raise IndexError("subject index out of range")
        parts = [self.subject_decisions(i) for i in idx]
        flat = np.concatenate(parts) if parts else np.empty(0, dtype=np.int8)
        return GroupDataset(self.group_id, flat, self.attempts[idx])

    def __eq__(self, other):
        if not isinstance(other, GroupDataset):
            return NotImplemented
        return (
            self.group_id == other.group_id
            and self.subject_ids == other.subject_ids
            and np.array_equal(self.attempts, other.attempts)
            and np.array_equal(self.decisions, other.decisions)
        )

    def __hash__(self):
        return hash((self.group_id, self.subject_ids, self.decisions.tobytes()))


@dataclass(frozen=True)
class StudyDataset:
    """Groups in canonical (sorted by group id) order.

    At least one group is required here; the multi-group procedures demand two.
    """

    groups: tuple[GroupDataset, ...]
    provenance: str = ""

    def __post_init__(self):
        groups = tuple(sorted(self.groups, key=lambda g: g.group_id))
        if not groups:
            raise DataError("a study needs at least one group")
        ids = [g.group_id for g in groups]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate group ids: {ids}")
        owner: dict[str, str] = {}
        for g in groups:
            if g._subject_ids is None:
                continue
            for sid in g.subject_ids:
                if sid in owner:
                    raise DataError(
                        f"subject {sid!r} appears in groups {owner[sid]!r} and {g.group_id!r}"
                    )
                owner[sid] = g.group_id
        object.__setattr__(self, "groups", groups)

    @property
    def G(self) -> int:
        return len(self.groups)

    @property
    def N(self) -> int:
        return sum(g.n_decisions for g in self.groups)

    @property
    def group_ids(self) -> list[str]:
        return [g.group_id for g in self.groups]

    def __getitem__(self, group_id: str) -> GroupDataset:
        for g in self.groups:
            if g.group_id == group_id:
                return g
        raise KeyError(group_id)

    def records(self) -> Iterable[DecisionRecord]:
        """Canonical order: group, subject, attempt."""
        for g in self.groups:
            for sid, vec in g.subjects:
                for j, d in enumerate(vec, start=1):
                    yield DecisionRecord(sid, g.group_id, j, d)

    def __eq__(self, other):
        if not isinstance(other, StudyDataset):
            return NotImplemented
        return self.groups == other.groups

    def __hash__(self):
        return hash(self.groups)


def from_records(records: Iterable[DecisionRecord], provenance: str = "") -> StudyDataset:
    """Assemble a study from decision records, enforcing every data invariant."""
    by_subject: dict[tuple[str, str], dict[int, int]] = defaultdict(dict)
    subject_group: dict[str, str] = {}
    for rec in records:
        prev = subject_group.setdefault(rec.subject_id, rec.group_id)
        if prev != rec.group_id:
            raise DataError(
                f"subject {rec.subject_id!r} appears in groups {prev!r} and {rec.group_id!r}"
            )
        attempts = by_subject[(rec.group_id, rec.subject_id)]
        if rec.attempt_index in attempts:
            raise DataError(
                f"duplicate attempt {rec.attempt_index} for subject {rec.subject_id!r}"
            )
        attempts[rec.attempt_index] = rec.decision
    if not by_subject:
        raise DataError("no decision records")
    grouped: dict[str, list[tuple[str, list[int]]]] = defaultdict(list)
    for (gid, sid), attempts in by_subject.items():
        grouped[gid].append((sid, [attempts[k] for k in sorted(attempts)]))
    return StudyDataset(
        tuple(GroupDataset.from_subjects(gid, subs) for gid, subs in grouped.items()),
        provenance,
    )


def _parse_int(value: str, what: str, line: int) -> int:
    try:
        return int(value.strip())
    except (ValueError, AttributeError):
        raise DataError(f"row {line}: {what} {value!r} is not an integer") from None


def ingest_csv(path, schema: Mapping[str, str] | None = None) -> StudyDataset:
    """Read a decision CSV.

    ``schema`` maps canonical field names (``subject_id``, ``group_id``,
    ``attempt_index``, ``decision``) to the column names used in the file.
    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    colmap = {c: c for c in CANONICAL_COLUMNS}
    colmap.update(schema or {})
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        missing = [c for c in CANONICAL_COLUMNS if colmap[c] not in reader.fieldnames]
        if missing:
            raise DataError(
                f"{path}: missing column(s) {[colmap[c] for c in missing]}; "
                f"found {reader.fieldnames}"
            )
        records = []
        for line, row in enumerate(reader, start=2):
            vals = {c: row.get(colmap[c]) for c in CANONICAL_COLUMNS}
            for c, v in vals.items():
                if v is None or v.strip() == "":
                    raise DataError(f"row {line}: missing {c}")
            decision = _parse_int(vals["decision"], "decision", line)
            if decision not in (0, 1):
                raise DataError(f"row {line}: decision must be 0 or 1, got {vals['decision']!r}")
            attempt = _parse_int(vals["attempt_index"], "attempt_index", line)
            if attempt < 1:
                raise DataError(f"row {line}: attempt_index must be >= 1, got {attempt}")
            records.append(
                DecisionRecord(vals["subject_id"].strip(), vals["group_id"].strip(), attempt, decision)
            )
    if not records:
        raise DataError(f"{path}: no data rows")
    return from_records(records, provenance=f"csv:{path.name}")


def write_csv(dataset: StudyDataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CANONICAL_COLUMNS)
        for r in dataset.records():
            w.writerow((r.subject_id, r.group_id, r.attempt_index, r.decision))


def to_json_records(dataset: StudyDataset) -> list[dict]:
    return [
        {
            "subject_id": r.subject_id,
            "group_id": r.group_id,
            "attempt_index": r.attempt_index,
            "decision": r.decision,
        }
        for r in dataset.records()
    ]


def from_json_records(rows: Iterable[Mapping], provenance: str = "") -> StudyDataset:
    records = []
    for k, row in enumerate(rows, start=1):
        try:
            records.append(
                DecisionRecord(
                    str(row["subject_id"]),
                    str(row["group_id"]),
                    int(row["attempt_index"]),
                    int(row["decision"]),
                )
            )
        except KeyError as exc:
            raise DataError(f"record {k}: missing {exc.args[0]}") from None
        except (TypeError, ValueError) as exc:
            raise DataError(f"record {k}: {exc}") from None
    return from_records(records, provenance)


def write_json(dataset: StudyDataset, path) -> None:
    Path(path).write_text(json.dumps(to_json_records(dataset)), encoding="utf-8")


def ingest_json(path) -> StudyDataset:
    path = Path(path)
    rows = json.loads(path.read_text(encoding="utf-8"))
    if not rows:
        raise DataError(f"{path}: no records")
    return from_json_records(rows, provenance=f"json:{path.name}")


def load_study(path, schema: Mapping[str, str] | None = None) -> StudyDataset:
    """Dispatch on extension: ``.json`` is the record mirror, anything else CSV."""
    if Path(path).suffix.lower() == ".json":
        return ingest_json(path)
    return ingest_csv(path, schema)
