"""Shared binary decision-tree structure.

Internal nodes route x[feature] < threshold to the left child; leaves
carry a float payload (regression value, or a class id for voting trees).
Trees flatten to parallel arrays for compact, exact serialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TreeNode:
    feature: int = -1  # -1 marks a leaf
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


def predict_tree(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Evaluate one tree over an (n, d) matrix."""
    out = np.empty(X.shape[0], dtype=np.float64)

    def walk(n: TreeNode, idx: np.ndarray) -> None:
        if n.is_leaf:
            out[idx] = n.value
            return
        go_left = X[idx, n.feature] < n.threshold
        walk(n.left, idx[go_left])
        walk(n.right, idx[~go_left])

    walk(node, np.arange(X.shape[0]))
    return out


def tree_depth(node: TreeNode) -> int:
    if node.is_leaf:
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def tree_to_arrays(root: TreeNode) -> dict[str, np.ndarray]:
    """Flatten to preorder arrays: feature, threshold, left, right, value."""
    feats: list[int] = []
    thrs: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    vals: list[float] = []

    def visit(n: TreeNode) -> int:
        i = len(feats)
        feats.append(n.feature)
        thrs.append(n.threshold)
        lefts.append(-1)
        rights.append(-1)
        vals.append(n.value)
        if not n.is_leaf:
            lefts[i] = visit(n.left)
            rights[i] = visit(n.right)
        return i

    visit(root)
    return {
        "feature": np.array(feats, dtype=np.int32),
        "threshold": np.array(thrs, dtype=np.float64),
        "left": np.array(lefts, dtype=np.int32),
        "right": np.array(rights, dtype=np.int32),
        "value": np.array(vals, dtype=np.float64),
    }


def tree_from_arrays(arrays: dict[str, np.ndarray]) -> TreeNode:
    feats = arrays["feature"]
    thrs = arrays["threshold"]
    lefts = arrays["left"]
    rights = arrays["right"]
    vals = arrays["value"]

    def build(i: int) -> TreeNode:
        node = TreeNode(int(feats[i]), float(thrs[i]), value=float(vals[i]))
        if node.feature >= 0:
            node.left = build(int(lefts[i]))
            node.right = build(int(rights[i]))
        return node

    return build(0)
