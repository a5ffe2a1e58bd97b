"""Predictive entropy and the entropy-band assignment of BI-RADS scores.

Entropy is measured in bits, so a two-class distribution has entropy in
[0, 1]. Because binary entropy is not monotone in the malignancy
probability, the band is chosen within the branch of the predicted label:

    benign branch:    H <= h_b2 -> B2, <= h_b3 -> B3, <= h_b4a -> B4a, else B4b
    malignant branch: H <= h_b5 -> B5, else B4c

``map_birads_from_prob`` applies the probability bands directly and serves
as a cross-check of the entropy route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import BiRadsCategory, Pathology
from .errors import ValidationError
from .network import PredictiveDistribution

# Probability-of-malignancy band edges.
P_B3 = 0.02
P_B4A = 0.10
P_B5 = 0.95

DEFAULT_PASSES = 100


def predictive_entropy(dist: PredictiveDistribution) -> float:
    """Shannon entropy in bits, with 0 log 0 taken as 0."""
    total = 0.0
    for p in (dist.p_benign, dist.p_malignant):
        if p > 0.0:
            total += p * math.log2(p)
    return -total


def binary_entropy(p_malignant: float) -> float:
    return predictive_entropy(PredictiveDistribution.from_malignant(p_malignant))


def default_b2_epsilon(passes: int = DEFAULT_PASSES) -> float:
    """Half the resolution of a T-pass estimate, capped below the B3 edge."""
    return min(1.0 / (2 * passes), P_B3 / 2)


@dataclass(frozen=True)
class BandThresholds:
    h_b2: float
    h_b3: float
    h_b4a: float
    h_b5: float
    log_base: int = 2

    def __post_init__(self):
        if not (0 <= self.h_b2 < self.h_b3 < self.h_b4a <= 1 and 0 < self.h_b5 < self.h_b4a):
            raise ValidationError(f"inconsistent entropy thresholds {self}")


def derive_thresholds(b2_prob_epsilon: float | None = None) -> BandThresholds:
    """Full-precision entropy edges of the probability bands.

    Each edge is the entropy of the distribution built from the band's
    malignancy edge, so a distribution sitting exactly on an edge lands on
    the same side under both mappers.
    """
    eps = default_b2_epsilon() if b2_prob_epsilon is None else b2_prob_epsilon
    return BandThresholds(
        h_b2=binary_entropy(eps),
        h_b3=binary_entropy(P_B3),
        h_b4a=binary_entropy(P_B4A),
        h_b5=binary_entropy(P_B5),
    )


@dataclass(frozen=True)
class MapperConfig:
    b2_prob_epsilon: float = field(default_factory=default_b2_epsilon)
    thresholds: BandThresholds | None = None
    tie_break_at_half: Pathology = Pathology.MALIGNANT

    def __post_init__(self):
        if not 0 <= self.b2_prob_epsilon < P_B3:
            raise ValidationError(f"b2_prob_epsilon must lie in [0, {P_B3}), got {self.b2_prob_epsilon}")
        if self.tie_break_at_half is not Pathology.MALIGNANT:
            raise ValidationError("only the malignant tie-break is supported")
        if self.thresholds is None:
            object.__setattr__(self, "thresholds", derive_thresholds(self.b2_prob_epsilon))

    @classmethod
    def for_passes(cls, passes: int) -> "MapperConfig":
        return cls(b2_prob_epsilon=default_b2_epsilon(passes))

    def to_json(self) -> dict:
        th = self.thresholds
        return {
            "log_base": th.log_base,
            "b2_prob_epsilon": self.b2_prob_epsilon,
            "h_b2": th.h_b2,
            "h_b3": th.h_b3,
            "h_b4a": th.h_b4a,
            "h_b5": th.h_b5,
            "tie_break_at_half": self.tie_break_at_half.value,
        }


def map_birads_from_prob(dist: PredictiveDistribution, cfg: MapperConfig | None = None) -> BiRadsCategory:
    cfg = cfg or MapperConfig()
    p = dist.p_malignant
    if p >= P_B5:
        return BiRadsCategory.B5
    if p >= 0.5:
        return BiRadsCategory.B4c
    if p > P_B4A:
        return BiRadsCategory.B4b
    if p > P_B3:
        return BiRadsCategory.B4a
    if p > cfg.b2_prob_epsilon:
        return BiRadsCategory.B3
    return BiRadsCategory.B2


def map_birads_from_entropy(
    predicted_label: Pathology, H: float, cfg: MapperConfig | None = None
) -> BiRadsCategory:
    cfg = cfg or MapperConfig()
    if not -1e-9 <= H <= 1 + 1e-9:
        raise ValidationError(f"entropy {H} outside [0, 1]")
    th = cfg.thresholds
    if predicted_label is Pathology.MALIGNANT:
        return BiRadsCategory.B5 if H <= th.h_b5 else BiRadsCategory.B4c
    if H <= th.h_b2:
        return BiRadsCategory.B2
    if H <= th.h_b3:
        return BiRadsCategory.B3
    if H <= th.h_b4a:
        return BiRadsCategory.B4a
    return BiRadsCategory.B4b


def assign_birads(dist: PredictiveDistribution, cfg: MapperConfig | None = None) -> BiRadsCategory:
    """Predicted label plus entropy band for one MC-averaged distribution."""
    return map_birads_from_entropy(dist.predicted_label, predictive_entropy(dist), cfg)
