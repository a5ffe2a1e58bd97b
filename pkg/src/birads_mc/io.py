"""File formats: lesion tables, per-pass probability samples and model JSON."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    RADIOLOGIST_LABELS,
    BiRadsCategory,
    FeatureLayout,
    LesionRecord,
    Margin,
    MorphFeatures,
    Pathology,
    Shape,
    Split,
    View,
)
from .errors import IngestError, LayoutMismatchError, SchemaError, ValidationError
from .network import BayesianClassifier, DropoutConfig, NetworkParams, PredictiveSamples, TrainConfig

logger = logging.getLogger(__name__)

LESION_COLUMNS = (
    "case_id",
    "view",
    "breast_density",
    "mass_shape",
    "mass_margins",
    "subtlety",
    "birads_assessment",
    "pathology",
    "split",
)
SAMPLE_COLUMNS = ("case_id", "pass_index", "p_benign", "p_malignant")
MODEL_SCHEMA_VERSION = 1

# Column spellings seen in public CBIS-DDSM description files.
DEFAULT_ALIASES = {
    "case_id": ("patient_id",),
    "view": ("image view", "image_view"),
    "breast_density": ("breast density",),
    "mass_shape": ("mass shape",),
    "mass_margins": ("mass margins",),
    "birads_assessment": ("assessment",),
}

_SHAPE_TOKENS = {
    "OVAL": Shape.OVAL,
    "ROUND": Shape.ROUND,
    "IRREGULAR": Shape.IRREGULAR,
    "LOBULATED": Shape.LOBULATED,
}
_MARGIN_TOKENS = {
    "CIRCUMSCRIBED": Margin.CIRCUMSCRIBED,
    "OBSCURED": Margin.OBSCURED,
    "MICROLOBULATED": Margin.MICROLOBULATED,
    "SPICULATED": Margin.SPICULATED,
    "ILL_DEFINED": Margin.ILL_DEFINED,
    "ILLDEFINED": Margin.ILL_DEFINED,
}
_SHAPE_OUT = {v: k for k, v in _SHAPE_TOKENS.items()} | {Shape.OTHER: "OTHER"}
_MARGIN_OUT = {Margin.CIRCUMSCRIBED: "CIRCUMSCRIBED", Margin.OBSCURED: "OBSCURED",
               Margin.MICROLOBULATED: "MICROLOBULATED", Margin.SPICULATED: "SPICULATED",
               Margin.ILL_DEFINED: "ILL_DEFINED", Margin.OTHER: "OTHER"}


def _split_tokens(raw: str, table: Mapping, other, what: str) -> frozenset:
    """Hyphen-joined descriptors become a set; unrecognised tokens map to Other."""
    tokens = [t.strip().upper().replace(" ", "_") for t in raw.split("-")]
    tokens = [t for t in tokens if t]
    if not tokens:
        raise IngestError(f"missing {what}")
    return frozenset(table.get(t, other) for t in tokens)


def _parse_int(raw: str, what: str, lo: int, hi: int) -> int:
    try:
        value = int(float(raw))
    except ValueError:
        raise IngestError(f"{what} {raw!r} is not an integer") from None
    if not lo <= value <= hi:
        raise IngestError(f"{what} {value} outside {lo}..{hi}")
    return value


def parse_birads(raw: str) -> BiRadsCategory:
    try:
        b = BiRadsCategory.parse(raw)
    except ValidationError:
        raise IngestError(f"unknown BI-RADS token {raw!r}") from None
    if b in (BiRadsCategory.B1, BiRadsCategory.B6):
        raise IngestError(f"BI-RADS {b.value}: B1/B6 rejected at ingest")
    if b not in RADIOLOGIST_LABELS:
        raise IngestError(f"BI-RADS {b.value} is not a radiologist assessment")
    return b


def parse_pathology(raw: str) -> Pathology:
    token = raw.strip().upper()
    if token == "MALIGNANT":
        return Pathology.MALIGNANT
    if token in ("BENIGN", "BENIGN_WITHOUT_CALLBACK"):
        return Pathology.BENIGN
    raise IngestError(f"unknown pathology {raw!r}")


def parse_split(raw: str) -> Split:
    token = raw.strip().lower()
    if token.startswith("train"):
        return Split.TRAIN
    if token.startswith("test"):
        return Split.TEST
    raise IngestError(f"unknown split {raw!r}")


def parse_view(raw: str) -> View:
    try:
        return View(raw.strip().upper())
    except ValueError:
        raise IngestError(f"unknown view {raw!r}") from None


def _row_to_record(row: Mapping[str, str]) -> LesionRecord:
    case_id = row["case_id"].strip()
    if not case_id:
        raise IngestError("empty case_id")
    features = MorphFeatures(
        shape=_split_tokens(row["mass_shape"], _SHAPE_TOKENS, Shape.OTHER, "mass_shape"),
        margins=_split_tokens(row["mass_margins"], _MARGIN_TOKENS, Margin.OTHER, "mass_margins"),
        density=_parse_int(row["breast_density"], "breast_density", 1, 4),
        subtlety=_parse_int(row["subtlety"], "subtlety", 1, 5),
        view=parse_view(row["view"]),
    )
    return LesionRecord(
        case_id=case_id,
        features=features,
        radiologist_birads=parse_birads(row["birads_assessment"]),
        pathology=parse_pathology(row["pathology"]),
        split=parse_split(row["split"]),
    )


@dataclass
class Ingested:
    records: list[LesionRecord]
    diagnostics: list[str] = field(default_factory=list)
    posterior: dict[str, float] = field(default_factory=dict)


def _resolve_columns(header: Sequence[str], aliases: Mapping[str, Iterable[str]] | None) -> dict[str, str]:
    present = {h.strip().lower(): h for h in header}
    merged = {k: tuple(v) for k, v in DEFAULT_ALIASES.items()}
    for k, v in (aliases or {}).items():
        merged[k] = tuple([v] if isinstance(v, str) else v) + merged.get(k, ())
    mapping = {}
    for col in LESION_COLUMNS:
        for name in (col, *merged.get(col, ())):
            if name.lower() in present:
                mapping[col] = present[name.lower()]
                break
        else:
            raise SchemaError(f"missing column {col!r}")
    return mapping


def load_lesions(
    path, strict: bool = True, aliases: Mapping[str, Iterable[str]] | None = None
) -> Ingested:
    """Read a lesion table.

    In strict mode the first bad row raises ``IngestError``; otherwise bad
    rows are skipped and reported as ``"line N: ..."`` diagnostics. An
    optional ``posterior`` column (written by the synthetic generator) is
    carried along.
    """
    path = Path(path)
    result = Ingested([])
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header required") from None
        columns = _resolve_columns(header, aliases)
        index = {h: i for i, h in enumerate(header)}
        post_col = index.get("posterior")
        for row in reader:
            line = reader.line_num
            if not any(cell.strip() for cell in row):
                continue
            try:
                if len(row) != len(header):
                    raise IngestError(f"expected {len(header)} fields, got {len(row)}")
                record = _row_to_record({c: row[index[h]] for c, h in columns.items()})
                if record.case_id in seen:
                    raise IngestError(f"duplicate case_id {record.case_id!r}")
                if post_col is not None and row[post_col].strip():
                    result.posterior[record.case_id] = float(row[post_col])
            except (ValidationError, ValueError) as exc:
                msg = f"line {line}: {exc}"
                if strict:
                    raise IngestError(f"{path}: {msg}") from exc
                result.diagnostics.append(msg)
                continue
            seen.add(record.case_id)
            result.records.append(record)
    for msg in result.diagnostics:
        logger.warning("%s: %s", path, msg)
    return result


def write_lesions(path, records: Sequence[LesionRecord], posterior: Mapping[str, float] | None = None) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LESION_COLUMNS + (("posterior",) if posterior is not None else ()))
        for r in records:
            f = r.features
            row = [
                r.case_id,
                f.view.value,
                f.density,
                "-".join(sorted(_SHAPE_OUT[s] for s in f.shape)),
                "-".join(sorted(_MARGIN_OUT[m] for m in f.margins)),
                f.subtlety,
                r.radiologist_birads.value,
                r.pathology.value.upper(),
                r.split.value.lower(),
            ]
            if posterior is not None:
                row.append(repr(float(posterior[r.case_id])))
            w.writerow(row)


def load_external_samples(path) -> dict[str, PredictiveSamples]:
    """Per-case MC samples keyed by case_id, in order of first appearance."""
    path = Path(path)
    passes: dict[str, dict[int, tuple[float, float]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SAMPLE_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        for row in reader:
            line = reader.line_num
            try:
                case = row["case_id"].strip()
                t = int(row["pass_index"])
                pb, pm = float(row["p_benign"]), float(row["p_malignant"])
            except (TypeError, ValueError) as exc:
                raise IngestError(f"{path}: line {line}: {exc}") from None
            if not (0.0 <= pb <= 1.0 and 0.0 <= pm <= 1.0):
                raise IngestError(f"{path}: line {line}: probabilities outside [0, 1]")
            total = pb + pm
            if abs(total - 1.0) > 1e-6:
                raise IngestError(f"{path}: line {line}: p_benign + p_malignant = {total}, not 1")
            if abs(total - 1.0) > 1e-12:
                pb, pm = pb / total, pm / total
            per_case = passes.setdefault(case, {})
            if t in per_case:
                raise IngestError(f"{path}: line {line}: duplicate pass index {t} for case {case!r}")
            per_case[t] = (pb, pm)

    out: dict[str, PredictiveSamples] = {}
    expected_T = None
    for case, per_case in passes.items():
        T = max(per_case) + 1
        for t in range(T):
            if t not in per_case:
                raise IngestError(f"{path}: case {case!r}: missing pass index {t}")
        if min(per_case) < 0:
            raise IngestError(f"{path}: case {case!r}: negative pass index")
        if expected_T is None:
            expected_T = T
        elif T != expected_T:
            raise IngestError(f"{path}: case {case!r} has T={T}, other cases have T={expected_T}")
        out[case] = PredictiveSamples(np.array([per_case[t] for t in range(T)]))
    return out


def write_external_samples(path, case_ids: Sequence[str], samples: np.ndarray) -> None:
    """``samples`` has shape (n_cases, T, 2)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for case, rows in zip(case_ids, samples):
            for t, (pb, pm) in enumerate(rows):
                w.writerow([case, t, repr(float(pb)), repr(float(pm))])


def model_to_json(model: BayesianClassifier) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "layer_sizes": list(model.params.sizes),
        "layers": [{"weights": W.ravel().tolist(), "bias": b.tolist()} for W, b in model.params.layers],
        "dropout_rate": model.dropout.rate,
        "feature_layout": model.layout.to_json(),
        "layout_hash": model.layout.hash,
        "seed": model.seed,
        "final_loss": model.final_loss,
        "train_config": asdict(model.train_config),
    }


def model_from_json(doc: Mapping) -> BayesianClassifier:
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise SchemaError(f"model schema version {version!r}, expected {MODEL_SCHEMA_VERSION}")
    sizes = [int(s) for s in doc["layer_sizes"]]
    if len(doc["layers"]) != len(sizes) - 1:
        raise SchemaError(f"{len(doc['layers'])} layers stored for layer sizes {sizes}")
    layers = []
    for i, (layer, fan_in, fan_out) in enumerate(zip(doc["layers"], sizes[:-1], sizes[1:])):
        w = np.asarray(layer["weights"], dtype=float)
        b = np.asarray(layer["bias"], dtype=float)
        if w.size != fan_in * fan_out or b.size != fan_out:
            raise SchemaError(
                f"layer {i}: declared {fan_in}x{fan_out} but stored {w.size} weights and {b.size} biases"
            )
        layers.append((w.reshape(fan_in, fan_out), b))
    layout = FeatureLayout.from_json(doc["feature_layout"])
    if layout.hash != doc.get("layout_hash", layout.hash):
        raise SchemaError("stored layout hash does not match the stored layout")
    if len(layout) != sizes[0]:
        raise SchemaError(f"layer 0: input size {sizes[0]} differs from layout length {len(layout)}")
    return BayesianClassifier(
        params=NetworkParams(tuple(layers)),
        dropout=DropoutConfig(float(doc["dropout_rate"])),
        layout=layout,
        seed=int(doc["seed"]),
        final_loss=float(doc["final_loss"]),
        train_config=TrainConfig(**doc.get("train_config", {})),
    )


def save_model(model: BayesianClassifier, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> BayesianClassifier:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a model file: {exc}") from None
    return model_from_json(doc)


def check_layout(model: BayesianClassifier, layout: FeatureLayout) -> None:
    if model.layout != layout:
        raise LayoutMismatchError(
            f"model was trained with feature layout {model.layout.hash}, data is encoded with {layout.hash}"
        )
