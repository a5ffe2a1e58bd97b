"""End-to-end run: SMOTE on the training split, training, MC prediction on
the test split, entropy mapping and the stratified evaluation.

The bundle is a plain dict whose serialisation is a pure function of the
inputs and the ``RunConfig``.
"""

from __future__ import annotations

import contextlib
import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .core import DEFAULT_LAYOUT, LesionRecord, Pathology, Split, encode_records
from .errors import PipelineError, ValidationError
from .evaluation import (
    confusion,
    distribution,
    radiologist_consistency,
    stratified_reports,
)
from .io import (
    check_layout,
    load_external_samples,
    load_lesions,
    save_model,
    write_external_samples,
)
from .network import (
    BayesianClassifier,
    DropoutConfig,
    PredictiveDistribution,
    TrainConfig,
    mc_predict_batch,
    train,
)
from .resample import GROUP_BY_BIRADS, SmoteConfig, smote_balance
from .synth import agreement_report, generate, oracle_birads, preset
from .uncertainty import (
    MapperConfig,
    default_b2_epsilon,
    map_birads_from_entropy,
    map_birads_from_prob,
    predictive_entropy,
)

logger = logging.getLogger(__name__)

BUNDLE_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    passes: int = 100
    dropout_rate: float = 0.5
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 32
    hidden: tuple[int, ...] = (64, 64)
    smote: bool = True
    smote_k: int = 5
    smote_group: str = GROUP_BY_BIRADS
    b2_epsilon: float | None = None
    lesions: str | None = None
    samples: str | None = None
    model: str | None = None
    out: str | None = None
    preset: str | None = None
    synth_n: int = 2000
    strict: bool = True
    column_aliases: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.passes < 1:
            raise ValidationError("passes must be >= 1")

    @classmethod
    def merged(cls, file_values: Mapping[str, Any] | None = None, **flags) -> "RunConfig":
        """Defaults, overridden by config-file values, overridden by explicit (non-None) flags."""
        known = {f.name for f in fields(cls)}
        values: dict[str, Any] = {}
        for source in (file_values or {}, {k: v for k, v in flags.items() if v is not None}):
            unknown = set(source) - known
            if unknown:
                raise ValidationError(f"unknown config key(s): {sorted(unknown)}")
            values.update(source)
        return cls(**values)

    def mapper(self) -> MapperConfig:
        eps = default_b2_epsilon(self.passes) if self.b2_epsilon is None else self.b2_epsilon
        return MapperConfig(b2_prob_epsilon=eps)

    def derived_seeds(self) -> dict[str, int]:
        """Independent 63-bit seeds per stage, spawned from the master seed."""
        names = ("smote", "train", "predict")
        children = np.random.SeedSequence(self.seed).spawn(len(names))
        return {n: int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for n, c in zip(names, children)}


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def _ingest(cfg: RunConfig):
    if cfg.preset:
        cohort = generate(preset(cfg.preset, n_cases=cfg.synth_n, seed=cfg.seed))
        return cohort.records, cohort.posterior_by_id(), []
    if cfg.lesions:
        got = load_lesions(cfg.lesions, strict=cfg.strict, aliases=cfg.column_aliases)
        return got.records, got.posterior, got.diagnostics
    raise ValidationError("either a lesions file or a synthetic preset is required")


def fit_model(train_records: Sequence[LesionRecord], cfg: RunConfig) -> tuple[BayesianClassifier, dict]:
    seeds = cfg.derived_seeds()
    X = encode_records(train_records, DEFAULT_LAYOUT)
    y = [r.pathology for r in train_records]
    info: dict[str, Any] = {"n_train": len(train_records), "n_synthetic": 0}
    if cfg.smote:
        with stage("smote"):
            if cfg.smote_group == GROUP_BY_BIRADS:
                groups = [r.radiologist_birads.value for r in train_records]
            else:
                groups = [r.pathology.value for r in train_records]
            res = smote_balance(
                X, groups, SmoteConfig(k_neighbors=cfg.smote_k, group_key=cfg.smote_group, seed=seeds["smote"])
            )
            # synthetic rows inherit the pathology of the member they were grown from
            y = [y[s] for s in res.source]
            X = res.X
            info["n_synthetic"] = int(res.synthetic.sum())
            info["group_counts"] = {g: res.groups.count(g) for g in sorted(set(res.groups))}
    with stage("train"):
        model = train(
            X,
            y,
            hidden=cfg.hidden,
            dropout=DropoutConfig(cfg.dropout_rate),
            config=TrainConfig(
                learning_rate=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.epochs, seed=seeds["train"]
            ),
            layout=DEFAULT_LAYOUT,
        )
    info["final_loss"] = model.final_loss
    return model, info


def assign(dists: np.ndarray, mapper: MapperConfig) -> list[dict]:
    """Entropy, predicted label and BI-RADS for each (p_benign, p_malignant) row."""
    out = []
    for pb, pm in dists:
        dist = PredictiveDistribution(float(pb), float(pm))
        H = predictive_entropy(dist)
        label = dist.predicted_label
        out.append(
            {
                "p_benign": dist.p_benign,
                "p_malignant": dist.p_malignant,
                "entropy": H,
                "predicted": label,
                "birads": map_birads_from_entropy(label, H, mapper),
                "birads_from_prob": map_birads_from_prob(dist, mapper),
            }
        )
    return out


def evaluate(
    records: Sequence[LesionRecord],
    assignments: Sequence[dict],
    mapper: MapperConfig,
    posterior: Mapping[str, float] | None = None,
) -> dict:
    model_birads = [a["birads"] for a in assignments]
    n = len(records)
    correct = sum(a["predicted"] is r.pathology for a, r in zip(assignments, records))
    section: dict[str, Any] = {
        "n_test": n,
        "test_accuracy": 100.0 * correct / n if n else 0.0,
        "mapper_cross_check_agreement": sum(a["birads"] is a["birads_from_prob"] for a in assignments),
        "strata": [rep.to_json() for rep in stratified_reports(records, model_birads)],
        "radiologist_consistency": {
            str(k): round(v, 2) for k, v in radiologist_consistency(records).items()
        },
        "confusion": confusion(records, model_birads).to_json(),
        "distribution": distribution(records, model_birads).to_json(),
    }
    if posterior and all(r.case_id in posterior for r in records):
        oracle = [oracle_birads(posterior[r.case_id], mapper) for r in records]
        section["agreement"] = agreement_report(model_birads, oracle, [r.pathology for r in records])
    section["assignments"] = [
        {
            "case_id": r.case_id,
            "radiologist": str(r.radiologist_birads),
            "pathology": r.pathology.value,
            "p_benign": a["p_benign"],
            "p_malignant": a["p_malignant"],
            "entropy": a["entropy"],
            "predicted": a["predicted"].value,
            "birads": str(a["birads"]),
        }
        for r, a in zip(records, assignments)
    ]
    return section


def run_pipeline(cfg: RunConfig) -> dict:
    mapper = cfg.mapper()
    with stage("ingest"):
        records, posterior, diagnostics = _ingest(cfg)
        test = [r for r in records if r.split is Split.TEST]
        train_records = [r for r in records if r.split is Split.TRAIN]
        if not test:
            raise ValidationError("no test-split records")

    header = {
        "bundle_version": BUNDLE_VERSION,
        "seed": cfg.seed,
        "derived_seeds": cfg.derived_seeds(),
        "passes": cfg.passes,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "ingest_diagnostics": diagnostics,
    }
    bundle: dict[str, Any] = {"header": header}

    model = None
    samples = None
    if cfg.samples:
        with stage("samples"):
            external = load_external_samples(cfg.samples)
            missing = [r.case_id for r in test if r.case_id not in external]
            if missing:
                raise ValidationError(f"no samples for {len(missing)} test case(s), e.g. {missing[0]!r}")
            samples = np.stack([external[r.case_id].per_pass for r in test])
            header["passes"] = int(samples.shape[1])
            if cfg.b2_epsilon is None:
                mapper = MapperConfig.for_passes(header["passes"])
        bundle["model"] = {"source": "external-samples"}
    else:
        model, info = fit_model(train_records, cfg)
        if cfg.model:
            save_model(model, cfg.model)
        bundle["model"] = {"source": "internal", "layer_sizes": list(model.params.sizes),
                           "dropout_rate": model.dropout.rate, **info}
        with stage("predict"):
            X_test = encode_records(test, DEFAULT_LAYOUT)
            check_layout(model, DEFAULT_LAYOUT)
            samples = mc_predict_batch(model, X_test, cfg.passes, cfg.derived_seeds()["predict"])

    header["thresholds"] = mapper.to_json()
    with stage("map"):
        assignments = assign(samples.mean(axis=1), mapper)
    with stage("evaluate"):
        bundle["evaluation"] = evaluate(test, assignments, mapper, posterior)

    if cfg.out:
        with stage("write"):
            write_outputs(Path(cfg.out), bundle, test, samples, model)
    return bundle


def dumps_bundle(bundle: Mapping) -> str:
    return json.dumps(bundle, indent=2) + "\n"


def write_outputs(out: Path, bundle: Mapping, test: Sequence[LesionRecord], samples: np.ndarray, model) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "bundle.json").write_text(dumps_bundle(bundle), encoding="utf-8")
    ev = bundle["evaluation"]
    with (out / "strata.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stratum", "assigner", "row", "precision", "recall", "f1", "accuracy", "n"])
        for rep in ev["strata"]:
            for row_name in [p.value for p in Pathology] + ["macro"]:
                row = rep["macro"] if row_name == "macro" else rep["rows"][row_name]
                w.writerow([rep["stratum"], rep["assigner"], row_name, row["precision"], row["recall"],
                            row["f1"], rep["accuracy"], rep["n"]])
    with (out / "confusion.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        c = ev["confusion"]
        w.writerow(["radiologist\\model"] + c["cols"])
        for label, counts in zip(c["rows"], c["counts"]):
            w.writerow([label] + counts)
    with (out / "distribution.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["assigner", "pathology", "birads", "count"])
        for assigner, by_path in ev["distribution"].items():
            for pathology, cats in by_path.items():
                for cat, count in cats.items():
                    w.writerow([assigner, pathology, cat, count])
    with (out / "assignments.csv").open("w", newline="", encoding="utf-8") as fh:
        rows = ev["assignments"]
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["case_id"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    write_external_samples(out / "samples.csv", [r.case_id for r in test], samples)
    if model is not None:
        save_model(model, out / "model.json")
