"""Random forest: fully grown Gini trees on seeded bootstraps, majority vote.

Each tree draws its own bootstrap and examines a random subset of features
at every node (sqrt(d) by default). Per-tree generators are spawned from
the one top-level seed so results match sequential execution no matter how
trees are scheduled. Tie votes go to the smallest class id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import FeatureMatrix
from .gbdt import DegenerateLabels
from .trees import TreeNode, predict_tree, tree_from_arrays, tree_to_arrays


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int | None = None  # None = grow until pure
    max_features: str | int = "sqrt"
    seed: int = 0


@dataclass
class ForestModel:
    trees: list[TreeNode]
    n_classes: int
    n_features: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _as_matrix(fm) -> np.ndarray:
    if isinstance(fm, FeatureMatrix):
        return fm.data.astype(np.float64)
    return np.asarray(fm, dtype=np.float64)


def _resolve_max_features(rule: str | int, d: int) -> int:
    if isinstance(rule, int):
        return max(1, min(rule, d))
    if rule == "sqrt":
        return max(1, int(math.sqrt(d)))
    if rule == "all":
        return d
    raise ValueError(f"unknown max_features rule {rule!r}")


def _gini_best_split(X: np.ndarray, onehot: np.ndarray, features: np.ndarray,
                     ) -> tuple[int, float, float] | None:
    """Best (feature, threshold, impurity_decrease) among candidate features."""
    n = X.shape[0]
    counts = onehot.sum(axis=0)
    parent_gini = 1.0 - ((counts / n) ** 2).sum()
    best: tuple[int, float, float] | None = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = xs[:-1] != xs[1:]
        if not valid.any():
            continue
        left = np.cumsum(onehot[order], axis=0)[:-1]            # (n-1, k)
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        right = counts - left
        gini_l = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
        decrease = parent_gini - (nl / n) * gini_l - (nr / n) * gini_r
        decrease[~valid] = -np.inf
        i = int(np.argmax(decrease))
        if decrease[i] <= 1e-12:
            continue
        if best is None or decrease[i] > best[2]:
            best = (int(f), (xs[i] + xs[i + 1]) / 2.0, float(decrease[i]))
    return best


def _grow_gini_tree(X: np.ndarray, onehot: np.ndarray, rng: np.random.Generator,
                    max_features: int, max_depth: int | None) -> TreeNode:
    d = X.shape[1]

    def leaf(idx: np.ndarray) -> TreeNode:
        counts = onehot[idx].sum(axis=0)
        return TreeNode(value=float(np.argmax(counts)))  # ties -> smallest id

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        counts = onehot[idx].sum(axis=0)
        if idx.size < 2 or np.count_nonzero(counts) < 2:
            return leaf(idx)
        if max_depth is not None and depth >= max_depth:
            return leaf(idx)
        candidates = rng.choice(d, size=min(max_features, d), replace=False)
        found = _gini_best_split(X[idx], onehot[idx], np.sort(candidates))
        if found is None:
            return leaf(idx)
        feature, threshold, _dec = found
        go_left = X[idx, feature] < threshold
        node = TreeNode(feature=feature, threshold=threshold)
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    return grow(np.arange(X.shape[0]), 0)


def train_forest(fm, labels: np.ndarray,
                 cfg: ForestConfig = ForestConfig()) -> ForestModel:
    X = _as_matrix(fm)
    y = np.asarray(labels, dtype=np.int64)
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least 2 samples")
    if np.unique(y).size < 2:
        raise DegenerateLabels("need at least 2 distinct classes")
    k = int(y.max()) + 1
    onehot = np.zeros((n, k), dtype=np.float64)
    onehot[np.arange(n), y] = 1.0

    max_feat = _resolve_max_features(cfg.max_features, d)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_gini_tree(X[boot], onehot[boot], rng,
                                     max_feat, cfg.max_depth))
    return ForestModel(trees=trees, n_classes=k, n_features=d)


def forest_votes(model: ForestModel, fm) -> np.ndarray:
    """(n, k) matrix of raw vote counts."""
    X = _as_matrix(fm)
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"matrix has {X.shape[1]} features, model expects {model.n_features}")
    votes = np.zeros((X.shape[0], model.n_classes), dtype=np.int64)
    for tree in model.trees:
        pred = predict_tree(tree, X).astype(np.int64)
        votes[np.arange(X.shape[0]), pred] += 1
    return votes


def predict_forest(model: ForestModel, fm) -> np.ndarray:
    """Plurality vote over trees; ties broken by smallest class id."""
    return np.argmax(forest_votes(model, fm), axis=1)


def predict_proba_forest(model: ForestModel, fm) -> np.ndarray:
    """Vote shares as a probability surrogate."""
    votes = forest_votes(model, fm)
    return votes / votes.sum(axis=1, keepdims=True)


def forest_to_params(model: ForestModel) -> dict:
    return {
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "trees": [tree_to_arrays(t) for t in model.trees],
    }


def forest_from_params(params: dict) -> ForestModel:
    return ForestModel(
        trees=[tree_from_arrays(t) for t in params["trees"]],
        n_classes=int(params["n_classes"]),
        n_features=int(params["n_features"]),
    )
