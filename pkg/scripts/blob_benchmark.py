#!/usr/bin/env python3
"""Classifier-head benchmark on the synthetic blob dataset.

Reproduces the shape of the published model-comparison tables: all three
heads trained on the same toy-extractor features, seven-metric panel per
column. Everything is seeded; rerunning prints identical numbers.
"""

import argparse

import numpy as np

from skullct.features import extract_features, toy_extractor
from skullct.forest import ForestConfig, predict_forest, predict_proba_forest, \
    train_forest
from skullct.gbdt import GbdtConfig, predict_gbdt, predict_proba_gbdt, train_gbdt
from skullct.metrics import PANEL_KEYS, evaluate_predictions
from skullct.svc import LinearSvcConfig, predict_svc, svc_scores, train_linear_svc
from skullct.synthdata import blob_image_dataset

CLASS_NAMES = ("Depressed Fracture", "Linear Fracture", "Not Fractured")


def build_features(noise, separation, seed, extractor_seed=7, d=20):
    images, labels = blob_image_dataset(n_per_class=300, side=16, noise=noise,
                                        separation=separation, seed=seed)
    X = extract_features(images, toy_extractor(extractor_seed, d,
                                               input_side=16)).data
    train_idx, test_idx = [], []
    for c in range(3):
        idx = np.nonzero(labels == c)[0]
        train_idx.extend(idx[:200])
        test_idx.extend(idx[200:])
    train_idx, test_idx = np.array(train_idx), np.array(test_idx)
    return ((X[train_idx].astype(np.float64), labels[train_idx]),
            (X[test_idx].astype(np.float64), labels[test_idx]))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rounds", type=int, default=500)
    parser.add_argument("--n-trees", type=int, default=200)
    parser.add_argument("--epochs", type=int, default=1000)
    parser.add_argument("--noise", type=float, default=0.05)
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args()

    (Xtr, ytr), (Xte, yte) = build_features(args.noise, 1.0, args.seed)

    panels = {}
    model = train_gbdt(Xtr, ytr, GbdtConfig(rounds=args.rounds))
    panels["GBDT"] = evaluate_predictions(
        yte, predict_gbdt(model, Xte), predict_proba_gbdt(model, Xte),
        CLASS_NAMES).panel

    model = train_forest(Xtr, ytr, ForestConfig(n_trees=args.n_trees))
    panels["RandomForest"] = evaluate_predictions(
        yte, predict_forest(model, Xte), predict_proba_forest(model, Xte),
        CLASS_NAMES).panel

    model = train_linear_svc(Xtr, ytr, LinearSvcConfig(epochs=args.epochs))
    panels["LinearSVC"] = evaluate_predictions(
        yte, predict_svc(model, Xte), svc_scores(model, Xte),
        CLASS_NAMES).panel

    names = list(panels)
    width = max(len(k) for k in PANEL_KEYS) + 2
    print("Metric".ljust(width) + "".join(n.rjust(14) for n in names))
    for key in PANEL_KEYS:
        row = "".join(f"{panels[n][key]:.4f}".rjust(14) for n in names)
        print(key.ljust(width) + row)


if __name__ == "__main__":
    main()
