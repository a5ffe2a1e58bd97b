"""Command-line interface.

Exit codes: 0 on success, 2 on validation errors (bad input, bad config),
1 on runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import synth
from .core import DEFAULT_LAYOUT, Split, encode_records
from .errors import BiradsError, PipelineError, ValidationError
from .io import (
    check_layout,
    load_external_samples,
    load_lesions,
    load_model,
    save_model,
    write_external_samples,
    write_lesions,
)
from .network import mc_predict_batch
from .pipeline import RunConfig, assign, dumps_bundle, fit_model, run_pipeline
from .uncertainty import MapperConfig, default_b2_epsilon

logger = logging.getLogger("birads_mc")


def _add_run_flags(p: argparse.ArgumentParser, *, data=True, training=True, mapping=True):
    p.add_argument("--config", help="JSON file with RunConfig values")
    p.add_argument("--seed", type=int)
    if data:
        p.add_argument("--lesions", help="lesion table CSV")
        p.add_argument("--preset", choices=sorted(synth.PRESETS), help="generate a synthetic cohort instead")
        p.add_argument("--synth-n", type=int, dest="synth_n")
        p.add_argument("--strict", action=argparse.BooleanOptionalAction, default=None)
    if training:
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--hidden", type=lambda s: tuple(int(v) for v in s.split(",")),
                       help="comma-separated hidden widths, e.g. 64,64")
        p.add_argument("--dropout-rate", type=float, dest="dropout_rate")
        p.add_argument("--smote", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--smote-k", type=int, dest="smote_k")
    if mapping:
        p.add_argument("--passes", type=int)
        p.add_argument("--b2-epsilon", type=float, dest="b2_epsilon")


def _config(args: argparse.Namespace, **extra) -> RunConfig:
    file_values = {}
    if getattr(args, "config", None):
        try:
            file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "func", "verbose")}
    flags.update(extra)
    known = set(RunConfig.__dataclass_fields__)
    return RunConfig.merged(file_values, **{k: v for k, v in flags.items() if k in known})


def _records(cfg: RunConfig):
    if cfg.preset:
        cohort = synth.generate(synth.preset(cfg.preset, n_cases=cfg.synth_n, seed=cfg.seed))
        return cohort.records
    if not cfg.lesions:
        raise ValidationError("--lesions or --preset is required")
    return load_lesions(cfg.lesions, strict=cfg.strict, aliases=cfg.column_aliases).records


def cmd_synth(args) -> None:
    cohort = synth.generate(synth.preset(args.preset, n_cases=args.n, seed=args.seed))
    write_lesions(args.out, cohort.records, cohort.posterior_by_id())
    print(f"wrote {len(cohort.records)} cases to {args.out}")


def cmd_train(args) -> None:
    cfg = _config(args)
    records = [r for r in _records(cfg) if r.split is Split.TRAIN]
    model, info = fit_model(records, cfg)
    save_model(model, args.model)
    print(f"trained on {info['n_train']} cases (+{info['n_synthetic']} synthetic), "
          f"final loss {info['final_loss']:.4f}; saved {args.model}")


def cmd_predict(args) -> None:
    cfg = _config(args)
    model = load_model(args.model)
    check_layout(model, DEFAULT_LAYOUT)
    records = _records(cfg)
    if not args.all:
        records = [r for r in records if r.split is Split.TEST]
    samples = mc_predict_batch(model, encode_records(records, DEFAULT_LAYOUT), cfg.passes, cfg.seed)
    write_external_samples(args.out, [r.case_id for r in records], samples)
    print(f"wrote {cfg.passes} passes for {len(records)} cases to {args.out}")


def cmd_map(args) -> None:
    samples = load_external_samples(args.samples)
    T = next(iter(samples.values())).T if samples else 1
    eps = default_b2_epsilon(T) if args.b2_epsilon is None else args.b2_epsilon
    mapper = MapperConfig(b2_prob_epsilon=eps)
    ids = list(samples)
    dists = np.array([[d.p_benign, d.p_malignant] for d in (samples[c].distribution() for c in ids)])
    rows = assign(dists, mapper) if ids else []
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case_id", "p_benign", "p_malignant", "entropy", "predicted", "birads"])
        for case, a in zip(ids, rows):
            w.writerow([case, repr(a["p_benign"]), repr(a["p_malignant"]), repr(a["entropy"]),
                        a["predicted"].value, str(a["birads"])])
    print(f"mapped {len(ids)} cases (T={T}, b2_epsilon={eps}) to {args.out}")


def cmd_evaluate(args) -> None:
    cfg = _config(args, samples=args.samples, out=args.out)
    bundle = run_pipeline(cfg)
    _summary(bundle)


def cmd_run(args) -> None:
    cfg = _config(args, samples=args.samples, out=args.out, model=args.model)
    bundle = run_pipeline(cfg)
    if not cfg.out:
        sys.stdout.write(dumps_bundle(bundle))
        return
    _summary(bundle)


def _fmt(v) -> str:
    return f"{v:7.2f}" if isinstance(v, (int, float)) else f"{v:>7}"


def render(bundle: dict) -> str:
    ev = bundle["evaluation"]
    th = bundle["header"]["thresholds"]
    lines = [
        f"T={bundle['header']['passes']}  b2_epsilon={th['b2_prob_epsilon']}  "
        f"h_b3={th['h_b3']:.4f}  h_b4a={th['h_b4a']:.4f}  h_b5={th['h_b5']:.4f}",
        f"test cases: {ev['n_test']}  benign/malignant accuracy: {ev['test_accuracy']:.2f}%",
        "",
        f"{'stratum':<8}{'assigner':<12}{'row':<11}{'prec':>7}{'recall':>7}{'f1':>7}{'acc':>7}",
    ]
    for rep in ev["strata"]:
        for name in ("Benign", "Malignant", "macro"):
            row = rep["macro"] if name == "macro" else rep["rows"][name]
            acc = rep["accuracy"] if name == "macro" else ""
            lines.append(f"{rep['stratum']:<8}{rep['assigner']:<12}{name:<11}"
                         f"{_fmt(row['precision'])}{_fmt(row['recall'])}{_fmt(row['f1'])}{_fmt(acc)}")
    c = ev["confusion"]
    lines += ["", "radiologist \\ model  " + " ".join(f"{x:>4}" for x in c["cols"])]
    for label, counts in zip(c["rows"], c["counts"]):
        lines.append(f"{label:<21}" + " ".join(f"{n:>4}" for n in counts))
    if "agreement" in ev:
        a = ev["agreement"]
        lines += ["", "oracle agreement: coarse {coarse_agreement:.2f}%  band {band_agreement:.2f}%  "
                  "model accuracy {model_pathology_accuracy:.2f}%  oracle accuracy "
                  "{oracle_pathology_accuracy:.2f}%".format(**a)]
    return "\n".join(lines) + "\n"


def _summary(bundle: dict) -> None:
    sys.stdout.write(render(bundle))


def cmd_report(args) -> None:
    try:
        bundle = json.loads(Path(args.bundle).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read bundle {args.bundle}: {exc}") from None
    sys.stdout.write(render(bundle))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="birads-mc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic lesion table with posterior column")
    p.add_argument("--preset", choices=sorted(synth.PRESETS), default="separable")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="SMOTE + train on the training split, save a model")
    _add_run_flags(p, mapping=False)
    p.add_argument("--model", required=True, help="output model JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="T-pass MC-dropout samples for the test split")
    _add_run_flags(p, training=False)
    p.add_argument("--model", required=True)
    p.add_argument("--all", action="store_true", help="include training-split cases")
    p.add_argument("--out", required=True, help="samples CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("map", help="entropy and BI-RADS for a samples CSV")
    p.add_argument("--samples", required=True)
    p.add_argument("--b2-epsilon", type=float, dest="b2_epsilon")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("evaluate", help="score external samples against a lesion table")
    _add_run_flags(p, training=False)
    p.add_argument("--samples", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render a bundle.json as text tables")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="full pipeline: SMOTE, train, predict, map, evaluate")
    _add_run_flags(p)
    p.add_argument("--samples", help="skip training and use these samples")
    p.add_argument("--model", help="also save the trained model here")
    p.add_argument("--out", help="output directory (bundle.json and CSV tables)")
    p.set_defaults(func=cmd_run)
    return parser


def _is_validation(exc: BaseException) -> bool:
    if isinstance(exc, PipelineError):
        exc = exc.cause
    return isinstance(exc, (ValidationError, FileNotFoundError))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (BiradsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if _is_validation(exc) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
