"""Synthetic data generators.

The clinical dataset behind this pipeline is private, so everything is
exercised end-to-end on synthetic stand-ins:

* head-phantom DICOM series: tilted ellipse "heads" with a bone rim and a
  class-dependent inner marker, written as real DICOM files plus a
  labels CSV, for driving ingest -> run.
* blob image sets: images whose toy-extractor features form three
  Gaussian-ish clusters, for classifier benchmarks.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from . import dicom
from .preprocess import TensorImage

CLASS_NAMES = ("Depressed Fracture", "Linear Fracture", "Not Fractured")


def ellipse_mask(shape: tuple[int, int], center: tuple[float, float],
                 axes: tuple[float, float], angle_deg: float) -> np.ndarray:
    """Boolean mask of a rotated solid ellipse."""
    rr, cc = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    dy = rr - center[0]
    dx = cc - center[1]
    t = math.radians(angle_deg)
    u = math.cos(t) * dx + math.sin(t) * dy
    v = -math.sin(t) * dx + math.cos(t) * dy
    return (u / axes[1]) ** 2 + (v / axes[0]) ** 2 <= 1.0


def phantom_hu(side: int, class_id: int, tilt_deg: float,
               center: tuple[float, float] | None = None,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """A head-like HU image: tissue ellipse, bone rim, class marker disk.

    Class markers: 0 -> dense inner disk, 1 -> bright bar, 2 -> plain head.
    """
    rng = rng or np.random.default_rng(0)
    if center is None:
        center = (side / 2.0, side / 2.0)
    img = np.full((side, side), -1024.0)
    a, b = side * 0.32, side * 0.22  # semi-axes (row, col): elongated head
    head = ellipse_mask((side, side), center, (a, b), tilt_deg)
    img[head] = 40.0  # soft tissue
    rim = head & ~ellipse_mask((side, side), center, (a * 0.88, b * 0.88), tilt_deg)
    img[rim] = 900.0  # skull
    if class_id == 0:
        marker = ellipse_mask((side, side), center, (a * 0.38, a * 0.38), 0.0)
        img[marker] = 1600.0
    elif class_id == 1:
        bar = ellipse_mask((side, side), center, (a * 0.6, a * 0.12), tilt_deg)
        img[bar] = 2400.0
    img[head] += rng.normal(0.0, 8.0, size=int(head.sum()))
    return img


def write_phantom_series(root: str,
                         patients_per_class: int = 1,
                         slices_per_patient: int = 4,
                         side: int = 64,
                         thickness_mm: float = 1.0,
                         seed: int = 0) -> str:
    """Write a labeled phantom DICOM series; returns the labels CSV path.

    One directory per patient; every slice of a patient carries the
    patient's class. Stored pixels use slope 1 / intercept -1024.
    """
    rng = np.random.default_rng(seed)
    os.makedirs(root, exist_ok=True)
    labels_path = os.path.join(root, "labels.csv")
    with open(labels_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "class"])
        pid = 0
        for class_id, class_name in enumerate(CLASS_NAMES):
            for _ in range(patients_per_class):
                pid += 1
                patient = f"P{pid:03d}"
                pdir = os.path.join(root, patient)
                os.makedirs(pdir, exist_ok=True)
                tilt = float(rng.uniform(-20.0, 20.0))
                for inst in range(1, slices_per_patient + 1):
                    hu = phantom_hu(side, class_id, tilt,
                                    center=(side / 2 + rng.uniform(-4, 4),
                                            side / 2 + rng.uniform(-4, 4)),
                                    rng=rng)
                    stored = np.round(hu + 1024.0).astype(np.int32)
                    rel = os.path.join(patient, f"slice{inst:03d}.dcm")
                    dicom.write_ct_file(
                        os.path.join(root, rel), stored,
                        patient_id=patient, instance_number=inst,
                        slice_thickness_mm=thickness_mm,
                        rescale_slope=1.0, rescale_intercept=-1024.0)
                    writer.writerow([rel, class_name])
    return labels_path


def blob_image_dataset(n_per_class: int, side: int = 16, noise: float = 0.05,
                       separation: float = 1.0, seed: int = 0,
                       ) -> tuple[list[TensorImage], np.ndarray]:
    """Images whose pooled cells carry class-mean patterns plus pixel noise.

    Through the toy extractor (4x4 average pooling then a fixed random
    projection) the classes land as three Gaussian-like blobs in feature
    space. `separation` scales the between-class mean differences.
    """
    rng = np.random.default_rng(seed)
    cells = side // 4
    base = rng.uniform(0.35, 0.65, size=(cells, cells))
    offsets = rng.uniform(-0.3, 0.3, size=(3, cells, cells)) * separation
    means = np.clip(base + offsets, 0.0, 1.0)

    images: list[TensorImage] = []
    labels = np.repeat(np.arange(3), n_per_class)
    for c in range(3):
        mean_img = np.kron(means[c], np.ones((4, 4)))
        for _ in range(n_per_class):
            vals = np.clip(mean_img + rng.normal(0.0, noise, (side, side)), 0, 1)
            images.append(TensorImage(side=side, values=vals.astype(np.float32)))
    return images, labels
