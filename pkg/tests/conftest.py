import numpy as np
import pytest

from skullct.features import extract_features, toy_extractor
from skullct.synthdata import blob_image_dataset


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed"):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance" in rep.nodeid and rep.when == "call":
                name = rep.nodeid.split("::", 1)[1]
                lines.append((name, "PASS" if status == "passed" else "FAIL"))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}")


def _blob_split(n_per_class, noise, separation, image_seed, extractor_seed=7,
                d=20, train_per_class=200):
    """Blob images through the toy extractor, split per class."""
    images, labels = blob_image_dataset(n_per_class=n_per_class, side=16,
                                        noise=noise, separation=separation,
                                        seed=image_seed)
    ex = toy_extractor(seed=extractor_seed, d=d, input_side=16)
    X = extract_features(images, ex).data.astype(np.float64)
    train_idx, test_idx = [], []
    for c in range(3):
        idx = np.nonzero(labels == c)[0]
        train_idx.extend(idx[:train_per_class])
        test_idx.extend(idx[train_per_class:])
    train_idx, test_idx = np.array(train_idx), np.array(test_idx)
    return (X[train_idx], labels[train_idx]), (X[test_idx], labels[test_idx])


@pytest.fixture(scope="session")
def blob_features():
    """3 Gaussian-ish blobs in 20-D toy features: 600 train / 300 test."""
    return _blob_split(n_per_class=300, noise=0.05, separation=1.0,
                       image_seed=11)


@pytest.fixture(scope="session")
def blob_features_separable():
    """Wider class gaps and less noise: linearly separable variant."""
    return _blob_split(n_per_class=300, noise=0.03, separation=1.6,
                       image_seed=29)
