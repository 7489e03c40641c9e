"""Manifest handling, label encoding, patient-grouped splits, rebalancing.

Splits are grouped by patient so no patient contributes slices to more
than one partition; rebalancing randomly duplicates minority-class sample
references (no pixel data is copied) until every class matches the
majority count.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError

DEFAULT_CLASS_NAMES = ("Depressed Fracture", "Linear Fracture", "Not Fractured")

MANIFEST_HEADER = ["patient_id", "sample_ref", "class"]


class UnknownClassName(DataError):
    pass


class DuplicateSampleRef(DataError):
    pass


class MalformedRow(DataError):
    pass


class TooFewPatients(DataError):
    pass


class EmptyClass(DataError):
    def __init__(self, class_id: int):
        super().__init__(f"class {class_id} has no samples")
        self.class_id = class_id


@dataclass(frozen=True)
class LabeledSample:
    patient_id: str
    sample_ref: str
    class_id: int


@dataclass
class LabeledDataset:
    samples: list[LabeledSample]
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __len__(self) -> int:
        return len(self.samples)

    def class_counts(self) -> np.ndarray:
        counts = np.zeros(len(self.class_names), dtype=np.int64)
        for s in self.samples:
            counts[s.class_id] += 1
        return counts

    def patients(self) -> list[str]:
        return sorted({s.patient_id for s in self.samples})

    def labels(self) -> np.ndarray:
        return np.array([s.class_id for s in self.samples], dtype=np.int64)

    def refs(self) -> list[str]:
        return [s.sample_ref for s in self.samples]


def class_codes(class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES) -> dict[str, int]:
    """Integer code per class name, assigned by lexicographic order."""
    return {name: i for i, name in enumerate(sorted(class_names))}


def encode_labels(names: list[str],
                  class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Map class names (dataset order) to integer codes and one-hot rows."""
    codes = class_codes(class_names)
    try:
        labels = np.array([codes[n] for n in names], dtype=np.int64)
    except KeyError as exc:
        raise UnknownClassName(f"unknown class name {exc.args[0]!r}") from None
    onehot = np.zeros((len(names), len(class_names)), dtype=np.int64)
    if len(names):
        onehot[np.arange(len(names)), labels] = 1
    return labels, onehot


def decode_labels(labels: np.ndarray,
                  class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES) -> list[str]:
    ordered = sorted(class_names)
    return [ordered[int(c)] for c in labels]


def load_manifest(csv_path: str,
                  class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
                  ) -> LabeledDataset:
    """Read a `patient_id,sample_ref,class` manifest, preserving row order."""
    codes = class_codes(class_names)
    samples: list[LabeledSample] = []
    seen_refs: set[str] = set()
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow("manifest has no header row") from None
        if header != MANIFEST_HEADER:
            raise MalformedRow(f"bad header {header!r}, expected {MANIFEST_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(f"row {lineno}: expected 3 fields, got {len(row)}")
            patient, ref, cls = row
            if cls not in codes:
                raise UnknownClassName(f"row {lineno}: unknown class {cls!r}")
            if ref in seen_refs:
                raise DuplicateSampleRef(f"row {lineno}: duplicate sample_ref {ref!r}")
            seen_refs.add(ref)
            samples.append(LabeledSample(patient, ref, codes[cls]))
    return LabeledDataset(samples, tuple(class_names))


def grouped_split(ds: LabeledDataset,
                  fractions: tuple[float, float, float],
                  seed: int) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Patient-grouped train/val/test split by greedy slice-deficit filling.

    Patients are shuffled with the seeded generator, then each is assigned
    (with every one of its slices) to the partition whose remaining
    slice-count deficit is largest, ties going to the earlier partition.
    """
    if any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")

    by_patient: dict[str, list[LabeledSample]] = {}
    for s in ds.samples:
        by_patient.setdefault(s.patient_id, []).append(s)
    patients = sorted(by_patient)
    if len(patients) < 3:
        raise TooFewPatients(f"need at least 3 patients, got {len(patients)}")

    rng = np.random.default_rng(seed)
    order = [patients[i] for i in rng.permutation(len(patients))]

    total = len(ds)
    targets = [f * total for f in fractions]
    assigned = [0, 0, 0]
    membership: dict[str, int] = {}
    for patient in order:
        deficits = [targets[k] - assigned[k] for k in range(3)]
        part = int(np.argmax(deficits))  # argmax takes the earliest on ties
        membership[patient] = part
        assigned[part] += len(by_patient[patient])

    parts: list[list[LabeledSample]] = [[], [], []]
    for s in ds.samples:  # keep original manifest order within partitions
        parts[membership[s.patient_id]].append(s)
    return tuple(LabeledDataset(p, ds.class_names) for p in parts)


def rebalance(ds: LabeledDataset, seed: int) -> LabeledDataset:
    """Oversample every minority class to the majority count, then shuffle.

    Duplicates are drawn with replacement using the seeded generator; the
    undersampling stage is the identity once all classes sit at the
    majority count. Output contains only samples that existed in the input.
    """
    k = len(ds.class_names)
    by_class: list[list[LabeledSample]] = [[] for _ in range(k)]
    for s in ds.samples:
        by_class[s.class_id].append(s)
    for cid, bucket in enumerate(by_class):
        if not bucket:
            raise EmptyClass(cid)

    target = max(len(b) for b in by_class)
    rng = np.random.default_rng(seed)
    out: list[LabeledSample] = list(ds.samples)
    for bucket in by_class:
        deficit = target - len(bucket)
        if deficit > 0:
            picks = rng.integers(0, len(bucket), size=deficit)
            out.extend(bucket[int(i)] for i in picks)
    shuffled = [out[i] for i in rng.permutation(len(out))]
    return LabeledDataset(shuffled, ds.class_names)


def write_manifest(ds: LabeledDataset, path: str) -> None:
    ordered = sorted(ds.class_names)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for s in ds.samples:
            writer.writerow([s.patient_id, s.sample_ref, ordered[s.class_id]])


def write_split(out_dir: str,
                partitions: dict[str, LabeledDataset],
                fractions: tuple[float, float, float],
                seed: int) -> str:
    """Persist split CSVs plus a JSON sidecar recording seed and counts."""
    os.makedirs(out_dir, exist_ok=True)
    sidecar = {
        "seed": seed,
        "fractions": list(fractions),
        "partitions": {},
    }
    for name, part in partitions.items():
        write_manifest(part, os.path.join(out_dir, f"{name}.csv"))
        sidecar["partitions"][name] = {
            "slices": len(part),
            "patients": len(part.patients()),
            "class_counts": part.class_counts().tolist(),
        }
    sidecar_path = os.path.join(out_dir, "split.json")
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar_path
