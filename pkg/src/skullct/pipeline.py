"""Batch pipeline stages: ingest -> run -> compare/report.

Ingest parses a DICOM tree, preprocesses retained slices into a
content-addressed tensor cache and writes the labeled manifest. Run
executes split -> (train-only) balance -> extract -> train -> evaluate and
persists a RunRecord plus report text/JSON and SVG plots. Identical
configs produce byte-identical report JSON; timings live only in the run
record.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import dicom, svgplot
from .config import PipelineConfig
from .dataset import (
    LabeledDataset,
    grouped_split,
    load_manifest,
    rebalance,
    write_split,
)
from .errors import ConfigError, DataError
from .features import (
    FeatureMatrix,
    InterchangeExtractor,
    extract_features,
    save_feature_store,
    toy_extractor,
)
from .forest import ForestConfig, predict_forest, predict_proba_forest, train_forest
from .gbdt import GbdtConfig, predict_gbdt, predict_proba_gbdt, train_gbdt
from .metrics import AVERAGES, PANEL_KEYS, evaluate_predictions
from .preprocess import TensorImage, preprocess_slice
from .serialize import save_model
from .svc import LinearSvcConfig, predict_svc, svc_scores, train_linear_svc

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

CLASS_NAMES = ("Depressed Fracture", "Linear Fracture", "Not Fractured")


class MismatchedTestSets(DataError):
    """Compared runs were not evaluated on the same test partition."""


@dataclass
class IngestResult:
    manifest_path: str
    n_slices: int
    n_preprocessed: int
    n_cached: int
    warnings: list[str] = field(default_factory=list)


@dataclass
class RunRecord:
    run_dir: str
    record: dict

    @property
    def report(self) -> dict:
        return self.record["report"]


def _read_labels(path: str) -> dict[str, str]:
    labels: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "class"]:
            raise DataError(f"labels file needs a 'path,class' header, got {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"labels row {row!r} needs 2 fields")
            labels[row[0].replace("\\", "/")] = row[1]
    return labels


def _preprocess_token(cfg: PipelineConfig) -> bytes:
    keys = ("preprocess.threshold_hu", "preprocess.out_side",
            "preprocess.tilt_enabled")
    return json.dumps({k: cfg[k] for k in keys}, sort_keys=True).encode()


def cmd_ingest(cfg: PipelineConfig) -> IngestResult:
    """Parse, filter, preprocess and cache a series; write the manifest."""
    input_dir = cfg["paths.input_dir"]
    if not input_dir:
        raise ConfigError("paths.input_dir is required for ingest")
    if not os.path.isdir(input_dir):
        raise DataError(f"input directory {input_dir!r} does not exist")
    if not cfg["paths.labels"]:
        raise ConfigError("paths.labels is required for ingest")
    labels = _read_labels(cfg["paths.labels"])

    work = cfg["paths.work_dir"]
    cache_dir = os.path.join(work, "cache")
    os.makedirs(cache_dir, exist_ok=True)
    token = _preprocess_token(cfg)
    pre_cfg = cfg.preprocess()
    debug_dir = cfg["preprocess.debug_dir"] or None
    if debug_dir:
        os.makedirs(debug_dir, exist_ok=True)

    rows = []  # (patient, instance, path, ref, class_name)
    warnings: list[str] = []
    n_new = n_cached = 0
    labels_abs = os.path.abspath(cfg["paths.labels"])
    allowlist = cfg["ingest.allowlist"] or None
    for path in dicom.list_series_files(input_dir, allowlist):
        if os.path.abspath(path) == labels_abs:
            continue
        rel = os.path.relpath(path, input_dir).replace("\\", "/")
        try:
            with open(path, "rb") as fh:
                blob = fh.read()
            ct = dicom.extract_ct_slice(dicom.parse_dicom(blob), source_path=path)
        except (DataError, OSError, ValueError) as exc:
            msg = f"skipping {rel}: {exc}"
            warnings.append(msg)
            log.warning("%s", msg)
            continue
        if abs(ct.slice_thickness_mm - cfg["ingest.thickness_mm"]) >= 0.01:
            continue
        if rel not in labels:
            raise DataError(f"no label for {rel} in {cfg['paths.labels']}")

        digest = hashlib.sha256(blob + token).hexdigest()[:16]
        ref = f"cache/{digest}.npy"
        dest = os.path.join(work, ref)
        if os.path.exists(dest):
            n_cached += 1
        else:
            tensor = preprocess_slice(ct, pre_cfg, debug_dir=debug_dir)
            np.save(dest, tensor.values)
            n_new += 1
        rows.append((ct.patient_id, ct.instance_number, rel, ref, labels[rel]))

    if not rows:
        raise dicom.EmptySeries(
            f"no labeled slices with thickness {cfg['ingest.thickness_mm']} mm")

    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    manifest_path = os.path.join(work, "manifest.csv")
    with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "sample_ref", "class"])
        for patient, _instance, _rel, ref, cls in rows:
            writer.writerow([patient, ref, cls])
    return IngestResult(manifest_path, len(rows), n_new, n_cached, warnings)


def _load_tensors(work: str, refs: list[str], side: int) -> list[TensorImage]:
    images = []
    for ref in refs:
        values = np.load(os.path.join(work, ref))
        if values.shape != (side, side):
            raise DataError(
                f"{ref}: cached tensor is {values.shape}, expected {(side, side)}")
        images.append(TensorImage(side=side, values=values))
    return images


def _build_extractor(cfg: PipelineConfig):
    if cfg["extractor.kind"] == "toy":
        return toy_extractor(cfg["extractor.seed"], cfg["extractor.dim"],
                             input_side=cfg["preprocess.out_side"])
    extractor = InterchangeExtractor(cfg["extractor.sidecar"])
    if extractor.input_side != cfg["preprocess.out_side"]:
        raise ConfigError(
            f"exported model expects side {extractor.input_side}, preprocess "
            f"produces {cfg['preprocess.out_side']}")
    return extractor


def _train_and_score(cfg: PipelineConfig, train_fm: FeatureMatrix,
                     y_train: np.ndarray, test_fm: FeatureMatrix):
    """Returns (model, y_pred, proba, staged_losses or None)."""
    kind = cfg["classifier.kind"]
    if kind == "gbdt":
        model = train_gbdt(train_fm, y_train, GbdtConfig(
            rounds=cfg["classifier.rounds"],
            learning_rate=cfg["classifier.learning_rate"],
            max_depth=cfg["classifier.max_depth"],
            lam=cfg["classifier.lambda"],
            gamma=cfg["classifier.gamma"],
            seed=cfg["classifier.seed"],
            budget_is_total_trees=cfg["classifier.total_tree_budget"]))
        return (model, predict_gbdt(model, test_fm),
                predict_proba_gbdt(model, test_fm), model.train_losses)
    if kind == "forest":
        model = train_forest(train_fm, y_train, ForestConfig(
            n_trees=cfg["classifier.n_trees"], seed=cfg["classifier.seed"]))
        return (model, predict_forest(model, test_fm),
                predict_proba_forest(model, test_fm), None)
    model = train_linear_svc(train_fm, y_train, LinearSvcConfig(
        C=cfg["classifier.c"], epochs=cfg["classifier.epochs"],
        seed=cfg["classifier.seed"]))
    # decision values softmax-squashed: a probability surrogate for the panel
    return model, predict_svc(model, test_fm), svc_scores(model, test_fm), None


def _test_fingerprint(test: LabeledDataset) -> str:
    payload = json.dumps(sorted((s.sample_ref, s.class_id) for s in test.samples))
    return hashlib.sha256(payload.encode()).hexdigest()


def _render_report_text(report: dict) -> str:
    """Re-render the stored report dict as the classwise table + panel."""
    names = [n for n in report["per_class"]]
    rows = names + [f"{a} avg" for a in AVERAGES]
    width = max(len(r) for r in rows) + 2
    lines = [" " * width
             + f"{'precision':>10}{'recall':>10}{'f1-score':>10}{'support':>10}",
             ""]
    for name in names:
        c = report["per_class"][name]
        lines.append(f"{name:>{width}}{c['precision']:>10.2f}{c['recall']:>10.2f}"
                     f"{c['f1']:>10.2f}{c['support']:>10}")
    lines.append("")
    for avg in AVERAGES:
        a = report["averages"][f"{avg}"]
        lines.append(f"{avg + ' avg':>{width}}{a['precision']:>10.2f}"
                     f"{a['recall']:>10.2f}{a['f1']:>10.2f}{a['support']:>10}")
    lines.append("")
    for key in PANEL_KEYS:
        value = report["panel"][key]
        rendered = "n/a" if value is None else f"{value:.4f}"
        lines.append(f"{key:>{width}}{rendered:>12}")
    return "\n".join(lines) + "\n"


def cmd_run(cfg: PipelineConfig) -> RunRecord:
    """Split, balance the training pool, extract, train, evaluate, persist."""
    work = cfg["paths.work_dir"]
    manifest = os.path.join(work, "manifest.csv")
    if not os.path.exists(manifest):
        raise DataError(f"no manifest at {manifest}; run ingest first")
    ds = load_manifest(manifest, CLASS_NAMES)

    run_dir = os.path.join(work, cfg["run.name"])
    os.makedirs(run_dir, exist_ok=True)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    train, val, test = grouped_split(ds, cfg["split.fractions"],
                                     cfg["split.seed"])
    write_split(os.path.join(run_dir, "split"),
                {"train": train, "val": val, "test": test},
                cfg["split.fractions"], cfg["split.seed"])
    timings["split"] = time.perf_counter() - t0

    counts_before = train.class_counts()
    t0 = time.perf_counter()
    if cfg["balance.enabled"]:
        train = rebalance(train, cfg["balance.seed"])
    counts_after = train.class_counts()
    timings["balance"] = time.perf_counter() - t0

    balance_svg = os.path.join(run_dir, "class_balance.svg")
    with open(balance_svg, "w", encoding="utf-8") as fh:
        fh.write(svgplot.bar_chart(
            "Training class distribution",
            list(CLASS_NAMES),
            {"before balancing": counts_before.astype(float).tolist(),
             "after balancing": counts_after.astype(float).tolist()}))

    t0 = time.perf_counter()
    extractor = _build_extractor(cfg)
    side = cfg["preprocess.out_side"]
    train_fm = extract_features(_load_tensors(work, train.refs(), side), extractor)
    test_fm = extract_features(_load_tensors(work, test.refs(), side), extractor)
    train_store = os.path.join(run_dir, "features_train.fvs")
    test_store = os.path.join(run_dir, "features_test.fvs")
    save_feature_store(train_fm, train.labels(), train_store)
    save_feature_store(test_fm, test.labels(), test_store)
    timings["extract"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    model, y_pred, proba, staged = _train_and_score(
        cfg, train_fm, train.labels(), test_fm)
    timings["train"] = time.perf_counter() - t0

    model_path = os.path.join(run_dir, "model.bin")
    save_model(model, model_path)

    artifacts = {"model": model_path, "class_balance_svg": balance_svg,
                 "split_dir": os.path.join(run_dir, "split"),
                 "features_train": train_store, "features_test": test_store}
    if staged is not None:
        loss_svg = os.path.join(run_dir, "train_loss.svg")
        with open(loss_svg, "w", encoding="utf-8") as fh:
            fh.write(svgplot.line_chart("Training loss per boosting round",
                                        {"log loss": list(staged)},
                                        x_label="round", y_label="loss"))
        artifacts["train_loss_svg"] = loss_svg

    t0 = time.perf_counter()
    report = evaluate_predictions(test.labels(), y_pred, proba, CLASS_NAMES,
                                  log_loss_eps=cfg["metrics.log_loss_eps"])
    timings["evaluate"] = time.perf_counter() - t0

    report_json = os.path.join(run_dir, "report.json")
    with open(report_json, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    report_txt = os.path.join(run_dir, "report.txt")
    with open(report_txt, "w", encoding="utf-8") as fh:
        fh.write(_render_report_text(report.to_dict()))
    artifacts["report_json"] = report_json
    artifacts["report_txt"] = report_txt

    record = {
        "schema_version": SCHEMA_VERSION,
        "run_name": cfg["run.name"],
        "config": cfg.snapshot(),
        "timings": {k: round(v, 6) for k, v in timings.items()},
        "artifacts": artifacts,
        "class_counts": {
            "train_before_balance": counts_before.tolist(),
            "train_after_balance": counts_after.tolist(),
            "val": val.class_counts().tolist(),
            "test": test.class_counts().tolist(),
        },
        "test_fingerprint": _test_fingerprint(test),
        "report": report.to_dict(),
    }
    record_path = os.path.join(run_dir, "run_record.json")
    with open(record_path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for path in artifacts.values():
        if not os.path.exists(path):
            raise DataError(f"artifact {path} missing at record-write time")
    return RunRecord(run_dir, record)


def load_run_record(path: str) -> dict:
    """Read a run_record.json (or the directory containing one)."""
    if os.path.isdir(path):
        path = os.path.join(path, "run_record.json")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            record = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read run record: {exc}") from None
    if record.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported run record schema in {path}")
    return record


def cmd_compare(record_paths: list[str]) -> tuple[str, dict]:
    """Metric x model grid over runs that share a test partition."""
    if len(record_paths) < 2:
        raise DataError("compare needs at least 2 run records")
    records = [load_run_record(p) for p in record_paths]
    fingerprints = {r["test_fingerprint"] for r in records}
    if len(fingerprints) != 1:
        raise MismatchedTestSets(
            "run records were evaluated on different test partitions")

    names = []
    for r in records:
        name = r["run_name"]
        names.append(name if name not in names else f"{name}#{len(names)}")

    grid = {key: [r["report"]["panel"][key] for r in records]
            for key in PANEL_KEYS}
    width = max(len(k) for k in PANEL_KEYS) + 2
    col_w = max(12, max(len(n) for n in names) + 2)
    lines = ["Metric".ljust(width)
             + "".join(n.rjust(col_w) for n in names)]
    for key in PANEL_KEYS:
        cells = "".join(
            ("n/a" if v is None else f"{v:.4f}").rjust(col_w)
            for v in grid[key])
        lines.append(key.ljust(width) + cells)
    text = "\n".join(lines) + "\n"
    return text, {"models": names, "metrics": grid}


def cmd_report(record_path: str) -> str:
    """Re-render the stored evaluation report of a run."""
    record = load_run_record(record_path)
    return _render_report_text(record["report"])
