"""Domain vocabulary: BI-RADS scale, pathology, morphological descriptors and
the fixed feature encoding used by the classifier."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import EncodingError, UnscoredCategoryError, ValidationError


class BiRadsCategory(Enum):
    B0 = "0"
    B1 = "1"
    B2 = "2"
    B3 = "3"
    B4 = "4"
    B4a = "4a"
    B4b = "4b"
    B4c = "4c"
    B5 = "5"
    B6 = "6"

    def __str__(self) -> str:
        return self.name

    @property
    def order(self) -> int:
        return _ORDER[self]

    @classmethod
    def parse(cls, token: str) -> "BiRadsCategory":
        """Accept ``"4a"``, ``"B4a"``, ``"BI-RADS 4A"`` and similar spellings."""
        t = str(token).strip().lower().replace("bi-rads", "").replace("birads", "").strip()
        if t.startswith("b"):
            t = t[1:]
        for member in cls:
            if member.value == t:
                return member
        raise ValidationError(f"unknown BI-RADS token {token!r}")


_ORDER = {c: i for i, c in enumerate(BiRadsCategory)}


class Pathology(Enum):
    BENIGN = "Benign"
    MALIGNANT = "Malignant"

    def __str__(self) -> str:
        return self.value

    @property
    def index(self) -> int:
        """Output-unit index: 0 for benign, 1 for malignant."""
        return 0 if self is Pathology.BENIGN else 1


class Shape(Enum):
    OVAL = "Oval"
    ROUND = "Round"
    IRREGULAR = "Irregular"
    LOBULATED = "Lobulated"
    OTHER = "Other"


class Margin(Enum):
    CIRCUMSCRIBED = "Circumscribed"
    OBSCURED = "Obscured"
    MICROLOBULATED = "Microlobulated"
    SPICULATED = "Spiculated"
    ILL_DEFINED = "IllDefined"
    OTHER = "Other"


class View(Enum):
    CC = "CC"
    MLO = "MLO"


class Split(Enum):
    TRAIN = "Train"
    TEST = "Test"


class Consistency(Enum):
    CONSISTENT = "Consistent"
    INCONSISTENT = "Inconsistent"
    INDETERMINATE = "Indeterminate"


# Categories the entropy mapper can emit, in increasing order of suspicion.
MAPPER_OUTPUTS = (
    BiRadsCategory.B2,
    BiRadsCategory.B3,
    BiRadsCategory.B4a,
    BiRadsCategory.B4b,
    BiRadsCategory.B4c,
    BiRadsCategory.B5,
)
BENIGN_CONSISTENT = frozenset(
    {BiRadsCategory.B2, BiRadsCategory.B3, BiRadsCategory.B4a, BiRadsCategory.B4b}
)
MALIGNANT_CONSISTENT = frozenset({BiRadsCategory.B4c, BiRadsCategory.B5})
RADIOLOGIST_LABELS = frozenset(
    {BiRadsCategory.B0, BiRadsCategory.B2, BiRadsCategory.B3, BiRadsCategory.B4, BiRadsCategory.B5}
)
COARSE_LABELS = (
    BiRadsCategory.B0,
    BiRadsCategory.B2,
    BiRadsCategory.B3,
    BiRadsCategory.B4,
    BiRadsCategory.B5,
)
_UNSCORED = frozenset({BiRadsCategory.B0, BiRadsCategory.B1, BiRadsCategory.B6})


def coarse(b: BiRadsCategory) -> BiRadsCategory:
    if b in (BiRadsCategory.B4a, BiRadsCategory.B4b, BiRadsCategory.B4c):
        return BiRadsCategory.B4
    return b


def implied_pathology(b: BiRadsCategory) -> Pathology | None:
    """Pathology a category commits to, or None for the un-subdivided B4."""
    if b in _UNSCORED:
        raise UnscoredCategoryError(f"unscored category {b}")
    if b in BENIGN_CONSISTENT:
        return Pathology.BENIGN
    if b in MALIGNANT_CONSISTENT:
        return Pathology.MALIGNANT
    return None


def consistent_with_pathology(b: BiRadsCategory, p: Pathology) -> Consistency:
    implied = implied_pathology(b)
    if implied is None:
        return Consistency.INDETERMINATE
    return Consistency.CONSISTENT if implied is p else Consistency.INCONSISTENT


@dataclass(frozen=True)
class MorphFeatures:
    shape: frozenset[Shape]
    margins: frozenset[Margin]
    density: int
    subtlety: int
    view: View = View.CC

    def __post_init__(self):
        object.__setattr__(self, "shape", frozenset(self.shape))
        object.__setattr__(self, "margins", frozenset(self.margins))
        if not self.shape:
            raise ValidationError("shape set is empty")
        if not self.margins:
            raise ValidationError("margins set is empty")
        if not 1 <= self.density <= 4:
            raise ValidationError(f"density {self.density} outside 1..4")
        if not 1 <= self.subtlety <= 5:
            raise ValidationError(f"subtlety {self.subtlety} outside 1..5")


@dataclass(frozen=True)
class LesionRecord:
    case_id: str
    features: MorphFeatures
    radiologist_birads: BiRadsCategory
    pathology: Pathology
    split: Split


@dataclass(frozen=True)
class FeatureLayout:
    """Ordered slot names. Multi-hot slots are ``"shape:<value>"`` and
    ``"margins:<value>"``; ``"density"`` and ``"subtlety"`` are scaled scalars."""

    slots: tuple[str, ...]
    version: int = 1

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        if len(set(self.slots)) != len(self.slots):
            raise ValidationError("duplicate slot names in feature layout")

    def __len__(self) -> int:
        return len(self.slots)

    def index(self, slot: str) -> int:
        try:
            return self.slots.index(slot)
        except ValueError:
            raise EncodingError(f"feature layout has no slot for {slot!r}") from None

    def binary_mask(self) -> np.ndarray:
        return np.array([s.startswith(("shape:", "margins:")) for s in self.slots])

    def to_json(self) -> dict:
        return {"version": self.version, "slots": list(self.slots)}

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureLayout":
        return cls(tuple(doc["slots"]), int(doc["version"]))

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_json(), separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


DEFAULT_LAYOUT = FeatureLayout(
    tuple(f"shape:{s.value}" for s in Shape)
    + tuple(f"margins:{m.value}" for m in Margin)
    + ("density", "subtlety")
)


def encode_features(features: MorphFeatures, layout: FeatureLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """Multi-hot shape and margins, density as (d-1)/3, subtlety as (s-1)/4.

    The view is not encoded.
    """
    x = np.zeros(len(layout))
    for s in features.shape:
        x[layout.index(f"shape:{s.value}")] = 1.0
    for m in features.margins:
        x[layout.index(f"margins:{m.value}")] = 1.0
    x[layout.index("density")] = (features.density - 1) / 3
    x[layout.index("subtlety")] = (features.subtlety - 1) / 4
    return x


def encode_records(records: Sequence[LesionRecord], layout: FeatureLayout = DEFAULT_LAYOUT) -> np.ndarray:
    if not records:
        return np.zeros((0, len(layout)))
    return np.stack([encode_features(r.features, layout) for r in records])


def check_unique_ids(records: Iterable[LesionRecord]) -> None:
    seen = set()
    for r in records:
        if r.case_id in seen:
            raise ValidationError(f"duplicate case_id {r.case_id!r}")
        seen.add(r.case_id)
