#!/usr/bin/env python3
"""Generate a labeled phantom DICOM series for exercising the pipeline."""

import argparse

from skullct.synthdata import write_phantom_series


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", help="directory to create the series in")
    parser.add_argument("--patients-per-class", type=int, default=5)
    parser.add_argument("--slices-per-patient", type=int, default=6)
    parser.add_argument("--side", type=int, default=64,
                        help="stored image side in pixels")
    parser.add_argument("--thickness-mm", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=5)
    args = parser.parse_args()

    labels = write_phantom_series(
        args.out_dir,
        patients_per_class=args.patients_per_class,
        slices_per_patient=args.slices_per_patient,
        side=args.side,
        thickness_mm=args.thickness_mm,
        seed=args.seed)
    total = 3 * args.patients_per_class * args.slices_per_patient
    print(f"wrote {total} slices under {args.out_dir}")
    print(f"labels: {labels}")


if __name__ == "__main__":
    main()
