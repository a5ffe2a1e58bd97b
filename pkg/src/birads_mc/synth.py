"""Synthetic lesion cohorts with an exactly known posterior.

Features are drawn independently per class from categorical tables, so
p(Malignant | features) follows from Bayes' rule over the same tables. The
exact posterior, mapped through the probability bands, gives an oracle
BI-RADS score to compare the trained model against.

A simulated radiologist label is attached to every case: the posterior is
scaled and perturbed on the logit scale, mapped through the bands and coarsened
(4a/4b/4c collapse to 4); a fixed fraction of cases is relabelled B0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    BiRadsCategory,
    LesionRecord,
    Margin,
    MorphFeatures,
    Pathology,
    Shape,
    Split,
    View,
    coarse,
    implied_pathology,
)
from .errors import SpecError, ValidationError
from .network import PredictiveDistribution
from .uncertainty import MapperConfig, map_birads_from_prob

SHAPES = tuple(Shape)
MARGINS = tuple(Margin)


@dataclass(frozen=True)
class ClassTables:
    """Probability tables in enum order: shape (5), margins (6), density 1..4, subtlety 1..5."""

    shape: tuple[float, ...]
    margins: tuple[float, ...]
    density: tuple[float, ...]
    subtlety: tuple[float, ...]

    def items(self):
        return (
            ("shape", self.shape, len(SHAPES)),
            ("margins", self.margins, len(MARGINS)),
            ("density", self.density, 4),
            ("subtlety", self.subtlety, 5),
        )


@dataclass(frozen=True)
class SynthSpec:
    n_cases: int
    benign_fraction: float
    benign: ClassTables
    malignant: ClassTables
    seed: int = 0
    test_fraction: float = 0.2
    radiologist_noise: float = 1.0
    radiologist_gain: float = 1.0
    b0_fraction: float = 0.05

    def __post_init__(self):
        if self.n_cases < 1:
            raise SpecError("n_cases must be positive")
        if not 0 < self.benign_fraction < 1:
            raise SpecError("benign_fraction must lie in (0, 1)")
        if not 0 <= self.test_fraction < 1 or not 0 <= self.b0_fraction < 1:
            raise SpecError("test_fraction and b0_fraction must lie in [0, 1)")
        for label, tables in (("benign", self.benign), ("malignant", self.malignant)):
            for name, probs, size in tables.items():
                a = np.asarray(probs, dtype=float)
                if a.shape != (size,):
                    raise SpecError(f"{label} {name} table needs {size} entries, got {a.shape}")
                if not np.any(a > 0):
                    raise SpecError(f"{label} {name} table is degenerate: every value has zero probability")
                if np.any(a < 0) or abs(a.sum() - 1.0) > 1e-12:
                    raise SpecError(f"{label} {name} table is not a probability vector")


PRESETS = {
    "separable": dict(
        benign_fraction=0.6,
        radiologist_noise=1.5,
        benign=ClassTables(
            shape=(0.55, 0.45, 0.0, 0.0, 0.0),
            margins=(0.6, 0.3, 0.0, 0.0, 0.1, 0.0),
            density=(0.3, 0.4, 0.2, 0.1),
            subtlety=(0.05, 0.1, 0.25, 0.3, 0.3),
        ),
        malignant=ClassTables(
            shape=(0.0, 0.0, 0.75, 0.25, 0.0),
            margins=(0.0, 0.05, 0.2, 0.45, 0.3, 0.0),
            density=(0.1, 0.2, 0.4, 0.3),
            subtlety=(0.1, 0.15, 0.25, 0.25, 0.25),
        ),
    ),
    "overlapping": dict(
        benign_fraction=0.55,
        radiologist_noise=1.5,
        radiologist_gain=2.0,
        benign=ClassTables(
            shape=(0.35, 0.25, 0.15, 0.2, 0.05),
            margins=(0.35, 0.25, 0.1, 0.05, 0.2, 0.05),
            density=(0.25, 0.35, 0.25, 0.15),
            subtlety=(0.05, 0.15, 0.25, 0.3, 0.25),
        ),
        malignant=ClassTables(
            shape=(0.15, 0.1, 0.45, 0.2, 0.1),
            margins=(0.1, 0.15, 0.2, 0.3, 0.2, 0.05),
            density=(0.15, 0.25, 0.35, 0.25),
            subtlety=(0.1, 0.2, 0.25, 0.25, 0.2),
        ),
    ),
}


def preset(name: str, n_cases: int = 2000, seed: int = 0, **overrides) -> SynthSpec:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return SynthSpec(n_cases=n_cases, seed=seed, **{**base, **overrides})


@dataclass(frozen=True, eq=False)
class SynthCohort:
    records: list[LesionRecord]
    posterior: np.ndarray

    def posterior_by_id(self) -> dict[str, float]:
        return {r.case_id: float(p) for r, p in zip(self.records, self.posterior)}


def _likelihood(tables: ClassTables, codes: np.ndarray) -> np.ndarray:
    out = np.ones(codes.shape[0])
    for col, (name, probs, _) in enumerate(tables.items()):
        out = out * np.asarray(probs)[codes[:, col]]
    return out


def exact_posterior(spec: SynthSpec, codes: np.ndarray) -> np.ndarray:
    """p(Malignant | features) for integer-coded rows (shape, margin, density-1, subtlety-1)."""
    lm = (1 - spec.benign_fraction) * _likelihood(spec.malignant, codes)
    lb = spec.benign_fraction * _likelihood(spec.benign, codes)
    return lm / (lm + lb)


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-3, 1 - 1e-3)
    return np.log(p) - np.log1p(-p)


def generate(spec: SynthSpec) -> SynthCohort:
    path_ss, feat_ss, rad_ss, split_ss = np.random.SeedSequence(spec.seed).spawn(4)
    n = spec.n_cases
    malignant = np.random.default_rng(path_ss).random(n) >= spec.benign_fraction

    frng = np.random.default_rng(feat_ss)
    codes = np.zeros((n, 4), dtype=int)
    for col, (name, _, size) in enumerate(spec.benign.items()):
        pb = np.asarray(getattr(spec.benign, name))
        pm = np.asarray(getattr(spec.malignant, name))
        draws_b = frng.choice(size, size=n, p=pb)
        draws_m = frng.choice(size, size=n, p=pm)
        codes[:, col] = np.where(malignant, draws_m, draws_b)
    views = frng.integers(2, size=n)
    posterior = exact_posterior(spec, codes)

    rrng = np.random.default_rng(rad_ss)
    perceived = 1.0 / (1.0 + np.exp(-(spec.radiologist_gain * _logit(posterior) + spec.radiologist_noise * rrng.standard_normal(n))))
    to_b0 = rrng.random(n) < spec.b0_fraction
    is_test = np.random.default_rng(split_ss).random(n) < spec.test_fraction

    width = len(str(n))
    records = []
    for i in range(n):
        s, m, d, t = codes[i]
        features = MorphFeatures(
            shape=frozenset({SHAPES[s]}),
            margins=frozenset({MARGINS[m]}),
            density=int(d) + 1,
            subtlety=int(t) + 1,
            view=(View.CC, View.MLO)[views[i]],
        )
        rad = (
            BiRadsCategory.B0
            if to_b0[i]
            else coarse(map_birads_from_prob(PredictiveDistribution.from_malignant(float(perceived[i]))))
        )
        records.append(
            LesionRecord(
                case_id=f"syn{i:0{width}d}",
                features=features,
                radiologist_birads=rad,
                pathology=Pathology.MALIGNANT if malignant[i] else Pathology.BENIGN,
                split=Split.TEST if is_test[i] else Split.TRAIN,
            )
        )
    return SynthCohort(records, posterior)


def oracle_birads(true_posterior: float, cfg: MapperConfig | None = None) -> BiRadsCategory:
    if not 0.0 <= true_posterior <= 1.0:
        raise ValidationError(f"posterior {true_posterior} outside [0, 1]")
    return map_birads_from_prob(PredictiveDistribution.from_malignant(float(true_posterior)), cfg)


def agreement_report(
    model_assignments: Sequence[BiRadsCategory],
    oracle_assignments: Sequence[BiRadsCategory],
    pathology: Sequence[Pathology],
) -> dict:
    """Agreement rates and pathology-band accuracies, all in percent."""
    n = len(model_assignments)
    if len(oracle_assignments) != n or len(pathology) != n:
        raise ValidationError("model, oracle and pathology lists differ in length")
    if n == 0:
        return {"n": 0, "coarse_agreement": 0.0, "band_agreement": 0.0,
                "model_pathology_accuracy": 0.0, "oracle_pathology_accuracy": 0.0}
    model_band = [implied_pathology(b) for b in model_assignments]
    oracle_band = [implied_pathology(b) for b in oracle_assignments]

    def pct(k: int) -> float:
        return 100.0 * k / n

    return {
        "n": n,
        "coarse_agreement": pct(sum(coarse(a) is coarse(b) for a, b in zip(model_assignments, oracle_assignments))),
        "band_agreement": pct(sum(a is b for a, b in zip(model_band, oracle_band))),
        "model_pathology_accuracy": pct(sum(a is p for a, p in zip(model_band, pathology))),
        "oracle_pathology_accuracy": pct(sum(a is p for a, p in zip(oracle_band, pathology))),
    }


def codes_of(features: MorphFeatures) -> tuple[int, int, int, int]:
    """Integer codes of a single-valued feature set, as used by ``exact_posterior``."""
    if len(features.shape) != 1 or len(features.margins) != 1:
        raise ValidationError("synthetic features are single-valued")
    (s,), (m,) = features.shape, features.margins
    return SHAPES.index(s), MARGINS.index(m), features.density - 1, features.subtlety - 1

