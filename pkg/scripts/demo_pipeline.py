#!/usr/bin/env python3
"""Full pipeline demo on phantom data: ingest, three runs, comparison grid."""

import argparse
import os

from skullct.cli import main as skullct_main
from skullct.synthdata import write_phantom_series


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("workdir", help="scratch directory for data + artifacts")
    parser.add_argument("--out-side", type=int, default=32)
    parser.add_argument("--rounds", type=int, default=80)
    args = parser.parse_args()

    dicom_dir = os.path.join(args.workdir, "dicom")
    work = os.path.join(args.workdir, "work")
    write_phantom_series(dicom_dir, patients_per_class=5,
                         slices_per_patient=6, side=64, seed=5)

    base = [
        f"--paths.input_dir={dicom_dir}",
        f"--paths.labels={os.path.join(dicom_dir, 'labels.csv')}",
        f"--paths.work_dir={work}",
        f"--preprocess.out_side={args.out_side}",
    ]
    assert skullct_main(["ingest", *base]) == 0

    runs = []
    for kind in ("gbdt", "forest", "svc"):
        name = f"demo-{kind}"
        assert skullct_main([
            "run", *base, f"--run.name={name}", f"--classifier.kind={kind}",
            f"--classifier.rounds={args.rounds}",
        ]) == 0
        runs.append(os.path.join(work, name))

    print()
    assert skullct_main(["compare", *runs]) == 0
    print(f"\nartifacts under {work}/demo-*/")


if __name__ == "__main__":
    main()
