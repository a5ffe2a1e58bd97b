from dataclasses import replace

import pytest

from birads_mc.core import (
    BiRadsCategory,
    LesionRecord,
    Margin,
    MorphFeatures,
    Pathology,
    Shape,
    Split,
    View,
)

ACCEPTANCE_LINES: list[str] = []


def make_record(case_id="c1", birads=BiRadsCategory.B2, pathology=Pathology.BENIGN, split=Split.TEST, **feat):
    features = MorphFeatures(
        shape=frozenset(feat.get("shape", {Shape.OVAL})),
        margins=frozenset(feat.get("margins", {Margin.CIRCUMSCRIBED})),
        density=feat.get("density", 2),
        subtlety=feat.get("subtlety", 3),
        view=feat.get("view", View.CC),
    )
    return LesionRecord(case_id, features, birads, pathology, split)


def stratum_records(birads, n_benign, n_malignant, prefix="s"):
    base = make_record(birads=birads)
    out = [replace(base, case_id=f"{prefix}b{i}") for i in range(n_benign)]
    out += [replace(base, case_id=f"{prefix}m{i}", pathology=Pathology.MALIGNANT) for i in range(n_malignant)]
    return out


@pytest.fixture
def record_factory():
    return make_record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
