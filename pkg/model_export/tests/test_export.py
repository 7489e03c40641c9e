import json

import numpy as np
import pytest

torch = pytest.importorskip("torch")

from model_export.export import (
    ARCHITECTURES,
    DownloadFailure,
    ExportSpec,
    UnknownArchitecture,
    _build_backbone,
    export_model,
    penultimate_activations,
)


@pytest.fixture(scope="module")
def resnet_export(tmp_path_factory):
    out = tmp_path_factory.mktemp("export") / "resnet50.pt"
    spec = ExportSpec(architecture="ResNet50", out_path=str(out),
                      weights="none", seed=3)
    sidecar = export_model(spec)
    return spec, sidecar


def test_sidecar_declares_2048(resnet_export):
    spec, sidecar = resnet_export
    assert sidecar["output_dim"] == 2048
    assert sidecar["input_side"] == 224
    on_disk = json.loads(open(spec.out_path + ".json").read())
    assert on_disk == sidecar
    for key in ("model_path", "input_name", "input_side", "output_name",
                "output_dim"):
        assert key in on_disk


def test_parity_within_tolerance(resnet_export):
    spec, sidecar = resnet_export
    # export_model already enforces this; assert the recorded value anyway
    assert sidecar["parity_max_relative_error"] <= 1e-4


def test_exported_features_match_source_penultimate(resnet_export):
    spec, _ = resnet_export
    reference, _, _ = _build_backbone(spec)
    torch.manual_seed(99)
    batch = torch.randn(8, 3, 224, 224)
    exported = torch.jit.load(spec.out_path)
    exported.eval()
    with torch.no_grad():
        got = exported(batch)
    want = penultimate_activations(reference, batch)
    rel = float((got - want).abs().max() / want.abs().max())
    assert got.shape == (8, 2048)
    assert rel <= 1e-4


def test_unknown_architecture():
    with pytest.raises(UnknownArchitecture):
        export_model(ExportSpec(architecture="VGG99", weights="none"))


def test_named_but_unbundled_architectures():
    for name in ("Xception-like", "InceptionResNetV2"):
        with pytest.raises(UnknownArchitecture):
            export_model(ExportSpec(architecture=name, weights="none"))


def test_download_failure_without_network(tmp_path):
    # this sandbox has no route to the weight host, so requesting
    # pretrained weights must surface as DownloadFailure
    spec = ExportSpec(architecture="ResNet50",
                      out_path=str(tmp_path / "m.pt"), weights="imagenet")
    with pytest.raises(DownloadFailure):
        export_model(spec)


def test_export_is_reproducible(tmp_path):
    specs = [ExportSpec(architecture="ResNet50", input_side=64,
                        out_path=str(tmp_path / f"m{i}.pt"),
                        weights="none", seed=5, parity_inputs=2)
             for i in range(2)]
    for spec in specs:
        export_model(spec)
    a = torch.jit.load(specs[0].out_path)
    b = torch.jit.load(specs[1].out_path)
    sa, sb = a.state_dict(), b.state_dict()
    assert list(sa) == list(sb)
    for key in sa:
        assert torch.equal(sa[key], sb[key])


def test_loaded_by_primary_backend_yields_2048_features(tmp_path):
    """Exported model consumed through the skullct interchange backend."""
    skullct_features = pytest.importorskip("skullct.features")

    side = 64  # adaptive pooling accepts any side; small keeps this fast
    spec = ExportSpec(architecture="ResNet50", input_side=side,
                      out_path=str(tmp_path / "backbone.pt"),
                      weights="none", seed=7, parity_inputs=2)
    export_model(spec)

    from skullct.preprocess import TensorImage

    extractor = skullct_features.InterchangeExtractor(spec.out_path + ".json")
    assert extractor.output_dim == 2048
    rng = np.random.default_rng(0)
    images = [TensorImage(side, rng.uniform(0, 1, (side, side))
                          .astype(np.float32)) for _ in range(5)]
    fm = skullct_features.extract_features(images, extractor)
    assert fm.data.shape == (5, 2048)
    assert np.isfinite(fm.data).all()
