"""Feature extraction backends and the binary feature store.

Two extractor backends share one contract (deterministic image -> vector):

* toy: 4x4 average pooling, a seeded fixed random projection, and a
  rectifier. Desk-scale stand-in for the pretrained CNN so the full
  pipeline runs with no neural runtime.
* interchange: a CNN exported as a scripted graph plus a JSON sidecar
  naming input/output tensors. The runtime (torch) is imported lazily; if
  it is absent the backend reports BackendUnavailable.

Store format "FVS1": magic, u32 N, u32 D (little endian), N*D float32
row-major, then N uint8 class labels.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .preprocess import TensorImage

STORE_MAGIC = b"FVS1"


class ShapeMismatch(DataError):
    pass


class BackendUnavailable(DataError):
    pass


class BadMagic(DataError):
    pass


class DimensionHeaderMismatch(DataError):
    pass


class TruncatedStore(DataError):
    pass


@dataclass
class FeatureMatrix:
    """N x D float32 matrix; row i stays aligned with sample i of its manifest."""

    data: np.ndarray
    refs: tuple[str, ...] | None = None  # sample_refs backing each row, if known

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if not np.isfinite(self.data).all():
            raise ValueError("feature matrix contains non-finite values")
        if self.refs is not None and len(self.refs) != self.data.shape[0]:
            raise ValueError("refs length must match row count")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


class ToyExtractor:
    """Deterministic stand-in extractor: avg-pool, project, rectify."""

    backend = "toy"

    def __init__(self, seed: int, d: int, input_side: int = 224):
        if d < 1:
            raise ValueError("d must be >= 1")
        if input_side % 4 != 0:
            raise ValueError("input_side must be divisible by 4")
        self.name = f"toy-{seed}-{d}"
        self.input_side = input_side
        self.output_dim = d
        pooled = (input_side // 4) ** 2
        rng = np.random.default_rng(seed)
        self._weights = rng.standard_normal((pooled, d)).astype(np.float32)
        self._bias = rng.standard_normal(d).astype(np.float32)

    def transform(self, images: list[TensorImage]) -> np.ndarray:
        s = self.input_side
        stack = np.stack([im.values for im in images]).astype(np.float32)
        pooled = stack.reshape(len(images), s // 4, 4, s // 4, 4).mean(axis=(2, 4))
        flat = pooled.reshape(len(images), -1)
        return np.maximum(flat @ self._weights + self._bias, 0.0)


def toy_extractor(seed: int, d: int, input_side: int = 224) -> ToyExtractor:
    """Build the seeded toy extractor (weights derive from the seed only)."""
    return ToyExtractor(seed, d, input_side)


class InterchangeExtractor:
    """Runs an exported CNN graph described by a sidecar JSON.

    Sidecar keys: model_path, input_name, input_side, output_name,
    output_dim. Single-channel input is replicated to the 3 channels the
    exported model expects.
    """

    backend = "interchange-model"

    def __init__(self, sidecar_path: str):
        with open(sidecar_path, "r", encoding="utf-8") as fh:
            side = json.load(fh)
        for key in ("model_path", "input_name", "input_side", "output_name",
                    "output_dim"):
            if key not in side:
                raise DataError(f"sidecar missing key {key!r}")
        try:
            import torch
        except ImportError as exc:
            raise BackendUnavailable(
                "interchange runtime (torch) is not installed") from exc
        self._torch = torch
        self.name = side["model_path"]
        self.input_name = side["input_name"]
        self.output_name = side["output_name"]
        self.input_side = int(side["input_side"])
        self.output_dim = int(side["output_dim"])
        self._model = torch.jit.load(side["model_path"], map_location="cpu")
        self._model.eval()

    def transform(self, images: list[TensorImage]) -> np.ndarray:
        torch = self._torch
        stack = np.stack([im.values for im in images]).astype(np.float32)
        x = torch.from_numpy(stack).unsqueeze(1).repeat(1, 3, 1, 1)
        with torch.no_grad():
            out = self._model(x)
        feats = out.reshape(len(images), -1).numpy()
        if feats.shape[1] != self.output_dim:
            raise ShapeMismatch(
                f"model emitted {feats.shape[1]} features, sidecar declares "
                f"{self.output_dim}")
        return feats


def extract_features(images: list[TensorImage], extractor) -> FeatureMatrix:
    """Run the extractor over a batch; row i corresponds to image i."""
    for i, im in enumerate(images):
        if im.side != extractor.input_side:
            raise ShapeMismatch(
                f"image {i} has side {im.side}, extractor expects "
                f"{extractor.input_side}")
    if not images:
        return FeatureMatrix(np.zeros((0, extractor.output_dim), dtype=np.float32))
    return FeatureMatrix(extractor.transform(images))


def save_feature_store(fm: FeatureMatrix, labels: np.ndarray, path: str) -> None:
    labels = np.asarray(labels)
    if labels.shape != (fm.n,):
        raise DimensionHeaderMismatch(
            f"{labels.shape[0] if labels.ndim else 0} labels for {fm.n} rows")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise ValueError("labels must fit in uint8")
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<II", fm.n, fm.d))
        fh.write(fm.data.astype("<f4").tobytes(order="C"))
        fh.write(labels.astype(np.uint8).tobytes())


def load_feature_store(path: str) -> tuple[FeatureMatrix, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != STORE_MAGIC:
        raise BadMagic(f"bad magic {blob[:4]!r}")
    if len(blob) < 12:
        raise TruncatedStore("header incomplete")
    n, d = struct.unpack("<II", blob[4:12])
    need = 12 + n * d * 4 + n
    if len(blob) < need:
        raise TruncatedStore(f"file holds {len(blob)} bytes, header implies {need}")
    if len(blob) > need:
        raise DimensionHeaderMismatch(
            f"{len(blob) - need} trailing bytes beyond declared {n}x{d} store")
    data = np.frombuffer(blob, dtype="<f4", count=n * d, offset=12).reshape(n, d)
    labels = np.frombuffer(blob, dtype=np.uint8, count=n, offset=12 + n * d * 4)
    return FeatureMatrix(data.copy()), labels.astype(np.int64)
