import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skullct import features as ft
from skullct.preprocess import TensorImage


def image(seed, side=16):
    rng = np.random.default_rng(seed)
    return TensorImage(side, rng.uniform(0, 1, (side, side)).astype(np.float32))


class TestToyExtractor:
    def test_deterministic_across_runs(self):
        imgs = [image(i) for i in range(3)]
        a = ft.extract_features(imgs, ft.toy_extractor(7, 64, input_side=16))
        b = ft.extract_features(imgs, ft.toy_extractor(7, 64, input_side=16))
        assert a.data.shape == (3, 64)
        assert (a.data == b.data).all()

    def test_zero_image_bias_only_response(self):
        ex = ft.toy_extractor(7, 64, input_side=16)
        zero = TensorImage(16, np.zeros((16, 16), dtype=np.float32))
        out = ft.extract_features([zero, zero], ex).data
        assert (out[0] == out[1]).all()
        assert out[0].any()  # rectified bias is nonzero in general

    def test_single_feature_dim(self):
        ex = ft.toy_extractor(0, 1, input_side=16)
        assert ft.extract_features([image(1)], ex).d == 1

    def test_bad_dim(self):
        with pytest.raises(ValueError):
            ft.toy_extractor(0, 0)

    def test_sensitive_to_one_pooled_cell(self):
        changed = 0
        for seed in range(10):
            ex = ft.toy_extractor(seed, 8, input_side=16)
            base = image(3)
            bumped_vals = base.values.copy()
            bumped_vals[0:4, 0:4] += 0.25  # one pooled cell
            bumped = TensorImage(16, np.clip(bumped_vals, 0, 1))
            out = ft.extract_features([base, bumped], ex).data
            changed += bool((out[0] != out[1]).any())
        assert changed >= 9

    @settings(max_examples=25)
    @given(st.integers(0, 10 ** 6))
    def test_output_nonnegative(self, seed):
        ex = ft.toy_extractor(seed, 12, input_side=16)
        out = ft.extract_features([image(seed), image(seed + 1)], ex)
        assert (out.data >= 0).all()

    def test_order_equivariant(self):
        imgs = [image(i) for i in range(5)]
        ex = ft.toy_extractor(3, 10, input_side=16)
        fwd = ft.extract_features(imgs, ex).data
        rev = ft.extract_features(imgs[::-1], ex).data
        assert (rev == fwd[::-1]).all()

    def test_side_mismatch(self):
        ex = ft.toy_extractor(0, 4, input_side=32)
        with pytest.raises(ft.ShapeMismatch):
            ft.extract_features([image(0, side=16)], ex)


class TestFeatureStore:
    def roundtrip(self, tmp_path, n=11, d=5):
        rng = np.random.default_rng(0)
        fm = ft.FeatureMatrix(rng.normal(size=(n, d)).astype(np.float32))
        labels = rng.integers(0, 3, n)
        path = tmp_path / "store.fvs"
        ft.save_feature_store(fm, labels, str(path))
        return fm, labels, path

    def test_roundtrip_bit_exact(self, tmp_path):
        fm, labels, path = self.roundtrip(tmp_path)
        loaded, lab = ft.load_feature_store(str(path))
        assert (loaded.data == fm.data).all()
        assert loaded.data.dtype == np.float32
        assert (lab == labels).all()

    def test_bad_magic(self, tmp_path):
        _, _, path = self.roundtrip(tmp_path)
        blob = path.read_bytes()
        path.write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(ft.BadMagic):
            ft.load_feature_store(str(path))

    def test_truncated_store(self, tmp_path):
        _, _, path = self.roundtrip(tmp_path)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) // 2])
        with pytest.raises(ft.TruncatedStore):
            ft.load_feature_store(str(path))

    def test_header_overstates_rows(self, tmp_path):
        import struct
        _, _, path = self.roundtrip(tmp_path, n=50, d=4)
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 100)
        path.write_bytes(bytes(blob))
        with pytest.raises(ft.TruncatedStore):
            ft.load_feature_store(str(path))

    def test_trailing_garbage(self, tmp_path):
        _, _, path = self.roundtrip(tmp_path)
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(ft.DimensionHeaderMismatch):
            ft.load_feature_store(str(path))

    def test_label_count_mismatch_on_save(self, tmp_path):
        fm = ft.FeatureMatrix(np.zeros((4, 2), dtype=np.float32))
        with pytest.raises(ft.DimensionHeaderMismatch):
            ft.save_feature_store(fm, np.zeros(3, dtype=int),
                                  str(tmp_path / "x"))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_roundtrip_property(self, seed):
        import os
        import tempfile
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(1, 30)), int(rng.integers(1, 20))
        fm = ft.FeatureMatrix(
            (rng.normal(size=(n, d)) * 100).astype(np.float32))
        labels = rng.integers(0, 3, n)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "s.fvs")
            ft.save_feature_store(fm, labels, path)
            loaded, lab = ft.load_feature_store(path)
        assert (loaded.data == fm.data).all() and (lab == labels).all()


def test_feature_matrix_rejects_nonfinite():
    with pytest.raises(ValueError):
        ft.FeatureMatrix(np.array([[np.nan, 1.0]]))


def test_interchange_sidecar_missing_key(tmp_path):
    sidecar = tmp_path / "model.json"
    sidecar.write_text('{"model_path": "x"}')
    with pytest.raises(ft.DataError):
        ft.InterchangeExtractor(str(sidecar))


def test_interchange_backend_unavailable(tmp_path, monkeypatch):
    sidecar = tmp_path / "model.json"
    sidecar.write_text(
        '{"model_path": "m.pt", "input_name": "input", "input_side": 32,'
        ' "output_name": "pooled", "output_dim": 8}')
    monkeypatch.setitem(sys.modules, "torch", None)
    with pytest.raises(ft.BackendUnavailable):
        ft.InterchangeExtractor(str(sidecar))
