"""Command-line front end mirroring the export spec fields."""

from __future__ import annotations

import argparse
import sys

from .export import (
    ARCHITECTURES,
    DownloadFailure,
    ExportParityError,
    ExportSpec,
    UnknownArchitecture,
    export_model,
)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="skullct-export",
        description="Export a CNN truncated at global average pooling, plus "
                    "the sidecar JSON the skullct feature backend reads")
    parser.add_argument("--architecture", default="ResNet50",
                        help=f"one of: {', '.join(ARCHITECTURES)}")
    parser.add_argument("--input-side", type=int, default=0,
                        help="input resolution (0 = architecture default)")
    parser.add_argument("--out-path", default="model.pt")
    parser.add_argument("--weights", default="imagenet",
                        choices=("imagenet", "none"),
                        help="'none' uses a seeded random initialization")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--parity-inputs", type=int, default=8)
    args = parser.parse_args(argv)

    spec = ExportSpec(architecture=args.architecture,
                      input_side=args.input_side,
                      out_path=args.out_path,
                      weights=args.weights,
                      seed=args.seed,
                      parity_inputs=args.parity_inputs)
    try:
        sidecar = export_model(spec)
    except UnknownArchitecture as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DownloadFailure, ExportParityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    print(f"model: {sidecar['model_path']}")
    print(f"sidecar: {sidecar['model_path']}.json")
    print(f"output_dim: {sidecar['output_dim']}, "
          f"parity: {sidecar['parity_max_relative_error']:.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
