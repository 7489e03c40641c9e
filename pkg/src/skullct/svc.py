"""One-vs-rest linear SVC with a squared-hinge loss.

Fits exactly K binary models. The intercept rides along as an appended
constant-1 feature and is regularized with the rest of the weight vector
(liblinear's behavior, unlike libsvm). Training is deterministic:
full-batch subgradient descent, one step per epoch, with the classic
1/(lambda*t) step schedule where lambda = 1/(C*n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .features import FeatureMatrix
from .gbdt import DegenerateLabels, softmax


@dataclass(frozen=True)
class LinearSvcConfig:
    C: float = 1.0
    epochs: int = 1000
    seed: int = 0  # interface uniformity; the optimizer is deterministic


@dataclass
class LinearSvcModel:
    weights: np.ndarray  # (k, d+1); last column is the intercept weight
    C: float

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1] - 1


def _as_matrix(fm) -> np.ndarray:
    if isinstance(fm, FeatureMatrix):
        return fm.data.astype(np.float64)
    return np.asarray(fm, dtype=np.float64)


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def train_linear_svc(fm, labels: np.ndarray,
                     cfg: LinearSvcConfig = LinearSvcConfig()) -> LinearSvcModel:
    X = _as_matrix(fm)
    if not np.isfinite(X).all():
        raise DataError("features must be finite")
    y = np.asarray(labels, dtype=np.int64)
    if np.unique(y).size < 2:
        raise DegenerateLabels("need at least 2 distinct classes")
    k = int(y.max()) + 1
    n = X.shape[0]
    Xa = _augment(X)
    lam = 1.0 / (cfg.C * n)

    # f(0) = 1 bounds the optimum: lam/2 |w*|^2 <= 1. Projecting onto that
    # ball keeps the aggressive early 1/(lam*t) steps from oscillating, and
    # the returned weights are the tail average of the iterates, which is
    # what actually converges for this step schedule.
    radius = math.sqrt(2.0 / lam)

    weights = np.zeros((k, Xa.shape[1]))
    for c in range(k):
        sign = np.where(y == c, 1.0, -1.0)
        w = np.zeros(Xa.shape[1])
        tail_from = cfg.epochs // 2
        tail_sum = np.zeros_like(w)
        tail_count = 0
        for t in range(1, cfg.epochs + 1):
            margins = sign * (Xa @ w)
            slack = np.maximum(0.0, 1.0 - margins)
            # d/dw [ lam/2 |w|^2 + mean(slack^2) ]
            grad = lam * w - (2.0 / n) * Xa.T @ (slack * sign)
            w -= grad / (lam * t)
            norm = float(np.linalg.norm(w))
            if norm > radius:
                w *= radius / norm
            if t > tail_from:
                tail_sum += w
                tail_count += 1
        weights[c] = tail_sum / tail_count
    return LinearSvcModel(weights=weights, C=cfg.C)


def decision_values(model: LinearSvcModel, fm) -> np.ndarray:
    X = _as_matrix(fm)
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"matrix has {X.shape[1]} features, model expects {model.n_features}")
    return _augment(X) @ model.weights.T


def predict_svc(model: LinearSvcModel, fm) -> np.ndarray:
    """Argmax of per-class decision values; ties go to the smallest id."""
    return np.argmax(decision_values(model, fm), axis=1)


def svc_scores(model: LinearSvcModel, fm) -> np.ndarray:
    """Softmax-squashed decision values, a probability surrogate for the panel."""
    return softmax(decision_values(model, fm))


def svc_to_params(model: LinearSvcModel) -> dict:
    return {"weights": model.weights, "C": model.C}


def svc_from_params(params: dict) -> LinearSvcModel:
    return LinearSvcModel(weights=np.asarray(params["weights"], dtype=np.float64),
                          C=float(params["C"]))
