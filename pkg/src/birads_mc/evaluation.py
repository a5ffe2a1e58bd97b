"""Stratified scoring of BI-RADS assignments against pathology.

Each stratum is the set of test cases sharing one radiologist label. Within
a stratum an assignment counts as a benign prediction when its category is
benign-consistent (B2, B3, B4a, B4b) and as malignant when it is B4c or B5.
Every pathology row treats itself as the positive class. Percentages are
kept at full precision; rounding happens in ``to_json``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    COARSE_LABELS,
    BiRadsCategory,
    LesionRecord,
    Pathology,
    coarse,
    implied_pathology,
)
from .errors import ValidationError

RADIOLOGIST = "Radiologist"
MODEL = "Model"
NOT_EVALUABLE = "-"
MODEL_COARSE = COARSE_LABELS[1:]
SCORABLE_STRATA = (BiRadsCategory.B2, BiRadsCategory.B3, BiRadsCategory.B5)


@dataclass(frozen=True)
class BinaryCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ClassRow:
    precision: float
    recall: float
    f1: float

    def rounded(self) -> dict:
        return {"precision": round(self.precision, 2), "recall": round(self.recall, 2), "f1": round(self.f1, 2)}


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def binary_metrics(counts: BinaryCounts) -> ClassRow:
    """Precision, recall and F1 as percentages; any 0/0 is reported as 0."""
    p = _ratio(counts.tp, counts.tp + counts.fp)
    r = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = _ratio(2 * p * r, p + r)
    return ClassRow(100 * p, 100 * r, 100 * f1)


@dataclass(frozen=True)
class StratumReport:
    stratum: BiRadsCategory
    assigner: str
    n: int
    n_benign: int
    n_malignant: int
    rows: dict | None = None
    macro: ClassRow | None = None
    accuracy: float | None = None
    evaluable: bool = True

    @property
    def empty(self) -> bool:
        return self.n == 0

    def to_json(self) -> dict:
        doc = {
            "stratum": str(self.stratum),
            "assigner": self.assigner,
            "n": self.n,
            "n_benign": self.n_benign,
            "n_malignant": self.n_malignant,
            "empty": self.empty,
            "evaluable": self.evaluable,
        }
        if not self.evaluable or self.empty:
            marker = {"precision": NOT_EVALUABLE, "recall": NOT_EVALUABLE, "f1": NOT_EVALUABLE}
            doc.update(
                rows={p.value: dict(marker) for p in Pathology},
                macro=dict(marker),
                accuracy=NOT_EVALUABLE,
            )
        else:
            doc.update(
                rows={p.value: self.rows[p].rounded() for p in Pathology},
                macro=self.macro.rounded(),
                accuracy=round(self.accuracy, 2),
            )
        return doc


def _common_stratum(records: Sequence[LesionRecord]) -> BiRadsCategory:
    labels = {r.radiologist_birads for r in records}
    if len(labels) != 1:
        raise ValidationError(f"records span several radiologist strata: {sorted(map(str, labels))}")
    return labels.pop()


def stratum_report(
    records: Sequence[LesionRecord],
    assigned: Sequence[BiRadsCategory],
    stratum: BiRadsCategory | None = None,
    assigner: str = MODEL,
) -> StratumReport:
    if len(records) != len(assigned):
        raise ValidationError(f"{len(records)} records but {len(assigned)} assignments")
    if stratum is None:
        if not records:
            raise ValidationError("an empty stratum needs an explicit stratum label")
        stratum = _common_stratum(records)
    truth = [r.pathology for r in records]
    n_mal = sum(p is Pathology.MALIGNANT for p in truth)
    base = dict(stratum=stratum, assigner=assigner, n=len(records), n_benign=len(records) - n_mal, n_malignant=n_mal)
    if not records:
        return StratumReport(**base, evaluable=False)

    predicted = [None if b is BiRadsCategory.B0 else implied_pathology(b) for b in assigned]
    undetermined = sum(p is None for p in predicted)
    if undetermined == len(predicted):
        return StratumReport(**base, evaluable=False)
    if undetermined:
        raise ValidationError(f"{undetermined} of {len(predicted)} assignments in stratum {stratum} are not scorable")

    rows = {}
    for positive in Pathology:
        tp = sum(t is positive and p is positive for t, p in zip(truth, predicted))
        fp = sum(t is not positive and p is positive for t, p in zip(truth, predicted))
        fn = sum(t is positive and p is not positive for t, p in zip(truth, predicted))
        c = BinaryCounts(tp, fp, len(truth) - tp - fp - fn, fn)
        rows[positive] = binary_metrics(c)
    macro = ClassRow(
        *(float(np.mean([getattr(rows[p], f) for p in Pathology])) for f in ("precision", "recall", "f1"))
    )
    accuracy = 100 * sum(t is p for t, p in zip(truth, predicted)) / len(truth)
    return StratumReport(**base, rows=rows, macro=macro, accuracy=accuracy)


def split_by_stratum(records: Sequence[LesionRecord]) -> dict[BiRadsCategory, list[int]]:
    """Record indices per radiologist label, in BI-RADS order."""
    out: dict[BiRadsCategory, list[int]] = {}
    for i, r in enumerate(records):
        out.setdefault(r.radiologist_birads, []).append(i)
    return {k: out[k] for k in sorted(out, key=lambda b: b.order)}


def radiologist_consistency(records: Sequence[LesionRecord]) -> dict[BiRadsCategory, float]:
    """Accuracy (%) of the radiologist's own label on the B2, B3 and B5 strata present."""
    out = {}
    for stratum, idx in split_by_stratum(records).items():
        if stratum not in SCORABLE_STRATA:
            continue
        sub = [records[i] for i in idx]
        out[stratum] = stratum_report(sub, [stratum] * len(sub), stratum, RADIOLOGIST).accuracy
    return out


def stratified_reports(
    records: Sequence[LesionRecord], model_assignments: Sequence[BiRadsCategory]
) -> list[StratumReport]:
    """Radiologist and model reports for every radiologist stratum present."""
    reports = []
    for stratum, idx in split_by_stratum(records).items():
        sub = [records[i] for i in idx]
        reports.append(stratum_report(sub, [r.radiologist_birads for r in sub], stratum, RADIOLOGIST))
        reports.append(stratum_report(sub, [model_assignments[i] for i in idx], stratum, MODEL))
    return reports


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows: radiologist B0, B2, B3, B4, B5. Columns: model B2, B3, B4, B5."""

    counts: np.ndarray
    rows: tuple = COARSE_LABELS
    cols: tuple = MODEL_COARSE

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def cell(self, radiologist: BiRadsCategory, model: BiRadsCategory) -> int:
        return int(self.counts[self.rows.index(radiologist), self.cols.index(model)])

    def to_json(self) -> dict:
        return {
            "rows": [str(b) for b in self.rows],
            "cols": [str(b) for b in self.cols],
            "counts": self.counts.tolist(),
        }


def confusion(records: Sequence[LesionRecord], model_assignments: Sequence[BiRadsCategory]) -> ConfusionMatrix:
    if len(records) != len(model_assignments):
        raise ValidationError(f"{len(records)} records but {len(model_assignments)} assignments")
    counts = np.zeros((len(COARSE_LABELS), len(MODEL_COARSE)), dtype=int)
    for r, m in zip(records, model_assignments):
        row, col = coarse(r.radiologist_birads), coarse(m)
        if row not in COARSE_LABELS or col not in MODEL_COARSE:
            raise ValidationError(f"cannot tabulate pair ({r.radiologist_birads}, {m})")
        counts[COARSE_LABELS.index(row), MODEL_COARSE.index(col)] += 1
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class DistributionTable:
    """``counts[assigner][pathology][coarse category]``."""

    counts: dict

    def get(self, assigner: str, pathology: Pathology, category: BiRadsCategory) -> int:
        return self.counts[assigner][pathology][category]

    def cohort_size(self, assigner: str, pathology: Pathology) -> int:
        return sum(self.counts[assigner][pathology].values())

    def to_json(self) -> dict:
        return {
            a: {p.value: {str(c): n for c, n in cats.items()} for p, cats in by_path.items()}
            for a, by_path in self.counts.items()
        }


def distribution(records: Sequence[LesionRecord], model_assignments: Sequence[BiRadsCategory]) -> DistributionTable:
    if len(records) != len(model_assignments):
        raise ValidationError(f"{len(records)} records but {len(model_assignments)} assignments")
    counts = {a: {p: {c: 0 for c in COARSE_LABELS} for p in Pathology} for a in (RADIOLOGIST, MODEL)}
    for r, m in zip(records, model_assignments):
        counts[RADIOLOGIST][r.pathology][coarse(r.radiologist_birads)] += 1
        counts[MODEL][r.pathology][coarse(m)] += 1
    return DistributionTable(counts)
