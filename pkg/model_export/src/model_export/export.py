"""Export a pretrained CNN truncated at global average pooling.

The classification head is replaced by the identity, so the scripted graph
maps N x 3 x side x side input to the N x pooled-width feature matrix. A
sidecar JSON records everything the consuming feature backend needs
(model_path, input_name, input_side, output_name, output_dim) plus the
weight provenance.

Every export is self-checked: the scripted graph is reloaded and its
features compared against the source model's penultimate activations on
random inputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field


class UnknownArchitecture(Exception):
    pass


class DownloadFailure(Exception):
    """Pretrained weights could not be obtained."""


class ExportParityError(Exception):
    """Exported graph disagrees with the source model."""


# name -> (torchvision builder name, pooled feature width, canonical side)
ARCHITECTURES = {
    "ResNet50": ("resnet50", 2048, 224),
    "InceptionV3": ("inception_v3", 2048, 299),
}

# Named by the source publication but not provided by torchvision; kept in
# the registry so the error message can say so explicitly.
UNAVAILABLE = ("Xception-like", "InceptionResNetV2")

PARITY_TOLERANCE = 1e-4


@dataclass(frozen=True)
class ExportSpec:
    architecture: str = "ResNet50"
    input_side: int = 0          # 0 = the architecture's canonical side
    out_path: str = "model.pt"
    weights: str = "imagenet"    # "imagenet" or "none" (seeded random init)
    seed: int = 0                # makes random-init exports reproducible
    parity_inputs: int = 8

    def resolved_side(self) -> int:
        if self.input_side:
            return self.input_side
        return ARCHITECTURES[self.architecture][2]


def _build_backbone(spec: ExportSpec):
    """Source-framework model with its classification head removed."""
    import torch
    from torchvision import models

    if spec.architecture in UNAVAILABLE:
        raise UnknownArchitecture(
            f"{spec.architecture} has no torchvision implementation; "
            f"available: {', '.join(ARCHITECTURES)}")
    if spec.architecture not in ARCHITECTURES:
        raise UnknownArchitecture(
            f"unknown architecture {spec.architecture!r}; "
            f"available: {', '.join(ARCHITECTURES)}")
    builder_name, dim, _ = ARCHITECTURES[spec.architecture]

    torch.manual_seed(spec.seed)
    kwargs = {}
    if builder_name == "inception_v3":
        kwargs = {"aux_logits": False, "init_weights": True}

    source = "random-init"
    if spec.weights == "imagenet":
        try:
            weights_enum = models.get_model_weights(builder_name).DEFAULT
            model = getattr(models, builder_name)(weights=weights_enum)
            source = weights_enum.url
        except Exception as exc:
            raise DownloadFailure(
                f"cannot obtain pretrained weights for {spec.architecture}: "
                f"{exc}") from exc
    elif spec.weights == "none":
        model = getattr(models, builder_name)(weights=None, **kwargs)
    else:
        raise ValueError(f"weights must be 'imagenet' or 'none', "
                         f"got {spec.weights!r}")

    model.fc = torch.nn.Identity()  # keep everything through the GAP/flatten
    model.eval()
    return model, dim, source


def penultimate_activations(model, batch):
    """Pooled features of the source model, for parity checking."""
    import torch

    with torch.no_grad():
        return model(batch)


def verify_export(model_path: str, reference, input_side: int,
                  n_inputs: int = 8, seed: int = 1234) -> float:
    """Max relative error between the exported graph and the reference."""
    import torch

    torch.manual_seed(seed)
    batch = torch.randn(n_inputs, 3, input_side, input_side)
    exported = torch.jit.load(model_path)
    exported.eval()
    with torch.no_grad():
        got = exported(batch)
    want = penultimate_activations(reference, batch)
    denom = want.abs().max().clamp(min=1e-12)
    return float((got - want).abs().max() / denom)


def export_model(spec: ExportSpec) -> dict:
    """Trace, save and self-check the truncated model; write the sidecar.

    Returns the sidecar dict (also written next to the model file as
    <out_path>.json).
    """
    import torch

    model, dim, source = _build_backbone(spec)
    side = spec.resolved_side()

    example = torch.randn(1, 3, side, side)
    with torch.no_grad():
        traced = torch.jit.trace(model, example)
    os.makedirs(os.path.dirname(os.path.abspath(spec.out_path)), exist_ok=True)
    traced.save(spec.out_path)

    rel_err = verify_export(spec.out_path, model, side, spec.parity_inputs)
    if rel_err > PARITY_TOLERANCE:
        raise ExportParityError(
            f"exported features deviate by {rel_err:.2e} relative "
            f"(tolerance {PARITY_TOLERANCE:.0e})")

    sidecar = {
        "model_path": spec.out_path,
        "input_name": "input",
        "input_side": side,
        "output_name": "pooled_features",
        "output_dim": dim,
        "architecture": spec.architecture,
        "weights_source": source,
        "parity_max_relative_error": rel_err,
    }
    sidecar_path = spec.out_path + ".json"
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar
