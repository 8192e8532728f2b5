import numpy as np
import pytest

from fnmr_audit.data import GroupDataset, StudyDataset


def make_group(subjects, group_id="A"):
    """``subjects`` maps subject id -> decision list."""
    return GroupDataset.from_subjects(group_id, subjects.items())


def make_study(groups):
    """``groups`` maps group id -> {subject id -> decisions}."""
    return StudyDataset(tuple(make_group(s, g) for g, s in groups.items()))


def random_study(rng, G=3, max_n=6, max_m=4, p=0.3):
    groups = {}
    for g in range(G):
        n = int(rng.integers(1, max_n + 1))
        groups[f"G{g}"] = {
            f"G{g}s{i}": list(rng.binomial(1, p, size=int(rng.integers(1, max_m + 1))))
            for i in range(n)
        }
    return make_study(groups)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""
    def record(label, passed, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
        assert passed, f"{label}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
