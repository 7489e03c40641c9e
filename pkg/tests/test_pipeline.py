import numpy as np
import pytest

from skullct.config import load_config
from skullct.dataset import grouped_split, load_manifest
from skullct.errors import DataError
from skullct.pipeline import (
    MismatchedTestSets,
    cmd_compare,
    cmd_ingest,
    cmd_report,
    cmd_run,
)
from skullct.synthdata import write_phantom_series


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Phantom series (15 patients x 6 slices) ingested once."""
    root = tmp_path_factory.mktemp("ws")
    dicom_dir = root / "dicom"
    write_phantom_series(str(dicom_dir), patients_per_class=5,
                         slices_per_patient=6, side=64, seed=5)
    cfg = load_config(None, [
        f"paths.input_dir={dicom_dir}",
        f"paths.labels={dicom_dir}/labels.csv",
        f"paths.work_dir={root}/work",
        "preprocess.out_side=32",
        "classifier.rounds=80",
    ])
    result = cmd_ingest(cfg)
    return root, cfg, result


def override(cfg, **kwargs):
    pairs = [f"{k.replace('__', '.')}={v}" for k, v in kwargs.items()]
    base = [f"{k}={v if not isinstance(v, tuple) else ','.join(map(str, v))}"
            for k, v in cfg.values.items()
            if not isinstance(v, tuple)]
    base.append("split.fractions=" + ",".join(
        str(f) for f in cfg.values["split.fractions"]))
    return load_config(None, base + pairs)


class TestIngest:
    def test_manifest_covers_all_patients(self, workspace):
        root, cfg, result = workspace
        ds = load_manifest(result.manifest_path)
        assert len(ds.patients()) == 15
        assert len(ds) == 90
        assert result.n_preprocessed == 90

    def test_rerun_is_idempotent(self, workspace):
        root, cfg, _ = workspace
        again = cmd_ingest(cfg)
        assert again.n_preprocessed == 0
        assert again.n_cached == 90

    def test_corrupt_file_warns_and_continues(self, workspace):
        root, cfg, _ = workspace
        bad = root / "dicom" / "garbage.dcm"
        bad.write_bytes(b"\x00" * 40)
        try:
            result = cmd_ingest(cfg)
            assert result.n_slices == 90
            assert any("garbage.dcm" in w for w in result.warnings)
        finally:
            bad.unlink()

    def test_missing_input_dir_is_data_error(self, workspace):
        root, cfg, _ = workspace
        broken = override(cfg, paths__input_dir=str(root / "nope"))
        with pytest.raises(DataError):
            cmd_ingest(broken)

    def test_unlabeled_slice_is_data_error(self, workspace, tmp_path):
        root, cfg, _ = workspace
        labels = tmp_path / "labels.csv"
        labels.write_text("path,class\n")  # header only: every slice unlabeled
        broken = override(cfg, paths__labels=str(labels))
        with pytest.raises(DataError):
            cmd_ingest(broken)

    def test_debug_dump_writes_stage_pgms(self, workspace, tmp_path):
        root, cfg, _ = workspace
        debug = tmp_path / "stages"
        with_dump = override(cfg, paths__work_dir=str(tmp_path / "work"),
                             preprocess__debug_dir=str(debug))
        cmd_ingest(with_dump)
        dumped = sorted(p.name for p in debug.iterdir())
        assert any(n.endswith("_1_hu.pgm") for n in dumped)
        assert any(n.endswith("_4_out.pgm") for n in dumped)


class TestRun:
    def test_end_to_end_micro_f1(self, workspace):
        root, cfg, _ = workspace
        record = cmd_run(override(cfg, run__name="bench"))
        assert record.report["panel"]["f1_micro"] >= 0.95
        for name in ("model.bin", "report.json", "report.txt",
                     "run_record.json", "class_balance.svg", "train_loss.svg",
                     "features_train.fvs", "features_test.fvs"):
            assert (root / "work" / "bench" / name).exists()

    def test_feature_store_artifacts_reload(self, workspace):
        from skullct.features import load_feature_store
        root, cfg, _ = workspace
        record = cmd_run(override(cfg, run__name="stores",
                                  classifier__rounds=5))
        fm, labels = load_feature_store(
            record.record["artifacts"]["features_test"])
        assert fm.d == cfg["extractor.dim"]
        assert fm.n == len(labels) > 0
        counts = np.bincount(labels, minlength=3).tolist()
        assert counts == record.record["class_counts"]["test"]

    def test_deterministic_report_json(self, workspace):
        root, cfg, _ = workspace
        rec1 = cmd_run(override(cfg, run__name="det1", classifier__rounds=30))
        rec2 = cmd_run(override(cfg, run__name="det2", classifier__rounds=30))
        a = (root / "work" / "det1" / "report.json").read_bytes()
        b = (root / "work" / "det2" / "report.json").read_bytes()
        assert a == b
        # the whole record matches too, apart from timings and paths
        for rec in (rec1, rec2):
            rec.record.pop("timings")
            rec.record.pop("artifacts")
            rec.record["config"].pop("run.name")
            rec.record.pop("run_name")
        assert rec1.record == rec2.record

    def test_balance_touches_training_only(self, workspace):
        root, cfg, _ = workspace
        record = cmd_run(override(cfg, run__name="bal", classifier__rounds=10))
        counts = record.record["class_counts"]
        before = counts["train_before_balance"]
        after = counts["train_after_balance"]
        assert after == [max(before)] * 3
        ds = load_manifest(str(root / "work" / "manifest.csv"))
        _, _, test = grouped_split(ds, cfg["split.fractions"],
                                   cfg["split.seed"])
        assert counts["test"] == test.class_counts().tolist()

    def test_balance_disabled_keeps_counts(self, workspace):
        root, cfg, _ = workspace
        record = cmd_run(override(cfg, run__name="nobal",
                                  balance__enabled="false",
                                  classifier__rounds=10))
        counts = record.record["class_counts"]
        assert counts["train_before_balance"] == counts["train_after_balance"]

    def test_missing_manifest_is_data_error(self, workspace, tmp_path):
        root, cfg, _ = workspace
        broken = override(cfg, paths__work_dir=str(tmp_path / "empty"))
        with pytest.raises(DataError):
            cmd_run(broken)

    def test_svg_plots_are_deterministic(self, workspace):
        root, cfg, _ = workspace
        a = (root / "work" / "det1" / "class_balance.svg").read_bytes()
        b = (root / "work" / "det2" / "class_balance.svg").read_bytes()
        assert a == b


@pytest.fixture(scope="module")
def three_runs(workspace):
    root, cfg, _ = workspace
    paths = []
    for kind, name in (("gbdt", "cmp-gbdt"), ("forest", "cmp-forest"),
                       ("svc", "cmp-svc")):
        cmd_run(override(cfg, run__name=name, classifier__kind=kind,
                         classifier__rounds=30, classifier__n_trees=40,
                         classifier__epochs=150))
        paths.append(str(root / "work" / name))
    return paths


class TestCompareAndReport:
    def test_grid_over_three_models(self, three_runs):
        text, payload = cmd_compare(three_runs)
        assert payload["models"] == ["cmp-gbdt", "cmp-forest", "cmp-svc"]
        for metric in ("f1_micro", "hamming_score", "hamming_loss",
                       "balanced_accuracy", "roc_auc", "kappa", "log_loss"):
            assert metric in payload["metrics"]
            assert len(payload["metrics"][metric]) == 3
            assert metric in text

    def test_single_record_rejected(self, three_runs):
        with pytest.raises(DataError):
            cmd_compare(three_runs[:1])

    def test_mismatched_test_sets(self, workspace, three_runs):
        root, cfg, _ = workspace
        cmd_run(override(cfg, run__name="cmp-othersplit", split__seed=99,
                         classifier__rounds=10))
        with pytest.raises(MismatchedTestSets):
            cmd_compare([three_runs[0], str(root / "work" / "cmp-othersplit")])

    def test_report_renders_stored_run(self, three_runs):
        text = cmd_report(three_runs[0])
        assert "micro avg" in text and "samples avg" in text
        assert "f1_micro" in text
