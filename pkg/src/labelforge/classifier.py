"""Multinomial logistic regression trained with deterministic full-batch
gradient descent, plus stratified cross-validation metrics.

The optimizer is full-batch gradient descent with Armijo backtracking line
search: zero randomness, loss non-increasing across accepted steps, and
bit-identical coefficients for identical inputs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import sparse

from .errors import DegenerateTrainingSet, LabelForgeError
from .vectorizer import SparseVector, stack

Matrix = Union[np.ndarray, sparse.spmatrix]

GRAD_TOL = 1e-4
MAX_EPOCHS = 500
DEFAULT_L2 = 1e-4


@dataclass(frozen=True)
class LinearModel:
    coefficients: np.ndarray  # shape (n_classes, n_features)
    intercepts: np.ndarray  # shape (n_classes,)
    classes: tuple[str, ...]
    l2_lambda: float

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[1]


@dataclass(frozen=True)
class ModelMetrics:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def as_dict(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }


@dataclass(frozen=True)
class ModelSnapshot:
    batch_index: int
    metrics: ModelMetrics
    model: LinearModel
    trained_at: float


def _as_matrix(X: Union[Matrix, Sequence[SparseVector]]) -> Matrix:
    if isinstance(X, (np.ndarray, sparse.spmatrix)):
        return X
    vectors = list(X)
    if not vectors:
        raise LabelForgeError("empty feature matrix")
    return stack(vectors, vectors[0].dimension)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _logits(W: np.ndarray, b: np.ndarray, X: Matrix) -> np.ndarray:
    return np.asarray(X @ W.T) + b


def loss_and_gradient(
    W: np.ndarray,
    b: np.ndarray,
    X: Matrix,
    y_idx: np.ndarray,
    l2_lambda: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy under softmax(Wx+b) plus (lambda/2)*||W||^2, with
    its exact analytic gradient (dW, db). Intercepts are not penalized."""
    n = X.shape[0]
    if n == 0:
        raise LabelForgeError("loss requires at least one example")
    logits = _logits(W, b, X)
    # log-sum-exp for numerical stability
    row_max = logits.max(axis=1)
    log_z = row_max + np.log(np.exp(logits - row_max[:, None]).sum(axis=1))
    log_probs = logits - log_z[:, None]
    loss = -log_probs[np.arange(n), y_idx].mean() + 0.5 * l2_lambda * float((W * W).sum())

    probs = np.exp(log_probs)
    probs[np.arange(n), y_idx] -= 1.0
    probs /= n
    grad_W = np.asarray(probs.T @ X) + l2_lambda * W
    grad_b = probs.sum(axis=0)
    return float(loss), grad_W, grad_b


def model_loss_and_gradient(
    model: LinearModel, X: Union[Matrix, Sequence[SparseVector]], y: Sequence[str]
) -> tuple[float, np.ndarray, np.ndarray]:
    """Same objective evaluated against a model's class order; labels must
    all belong to the model."""
    X = _as_matrix(X)
    index = {c: i for i, c in enumerate(model.classes)}
    try:
        y_idx = np.asarray([index[label] for label in y])
    except KeyError as exc:
        raise LabelForgeError(f"label {exc.args[0]!r} is not among model classes") from None
    if len(y_idx) != X.shape[0]:
        raise LabelForgeError("feature/label length mismatch")
    return loss_and_gradient(model.coefficients, model.intercepts, X, y_idx, model.l2_lambda)


def train(
    X: Union[Matrix, Sequence[SparseVector]],
    y: Sequence[str],
    l2_lambda: float = DEFAULT_L2,
    seed: int = 0,
    max_epochs: int = MAX_EPOCHS,
    grad_tol: float = GRAD_TOL,
) -> LinearModel:
    """Fit the model. Deterministic given (X, y, lambda, seed); stops when the
    gradient infinity-norm drops to ``grad_tol`` or after ``max_epochs``."""
    del seed  # initialization is zero, so training is seed-free by construction
    X = _as_matrix(X)
    y = list(y)
    if X.shape[0] != len(y) or not y:
        raise LabelForgeError("feature/label length mismatch")
    classes = tuple(sorted(set(y)))
    if len(classes) < 2:
        raise DegenerateTrainingSet("training data contains a single class")
    index = {c: i for i, c in enumerate(classes)}
    y_idx = np.asarray([index[label] for label in y])

    k, d = len(classes), X.shape[1]
    W = np.zeros((k, d))
    b = np.zeros(k)
    loss, grad_W, grad_b = loss_and_gradient(W, b, X, y_idx, l2_lambda)
    step = 1.0
    for _ in range(max_epochs):
        grad_norm = max(np.abs(grad_W).max(initial=0.0), np.abs(grad_b).max(initial=0.0))
        if grad_norm <= grad_tol:
            break
        grad_sq = float((grad_W * grad_W).sum() + (grad_b * grad_b).sum())
        accepted = False
        while step > 1e-12:
            cand_W = W - step * grad_W
            cand_b = b - step * grad_b
            cand_loss, cand_gW, cand_gb = loss_and_gradient(cand_W, cand_b, X, y_idx, l2_lambda)
            if cand_loss <= loss - 1e-4 * step * grad_sq:
                W, b, loss, grad_W, grad_b = cand_W, cand_b, cand_loss, cand_gW, cand_gb
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        step = min(step * 2.0, 1e4)
    return LinearModel(coefficients=W, intercepts=b, classes=classes, l2_lambda=l2_lambda)


def predict_proba(model: LinearModel, x: SparseVector) -> np.ndarray:
    """Softmax(Wx + b) for one vector; sums to 1 within 1e-9."""
    if x.dimension != model.n_features:
        raise LabelForgeError(
            f"vector dimension {x.dimension} does not match model features {model.n_features}"
        )
    z = model.intercepts.copy()
    if x.indices:
        idx = np.asarray(x.indices)
        vals = np.asarray(x.values)
        z = z + model.coefficients[:, idx] @ vals
    z -= z.max()
    exp = np.exp(z)
    return exp / exp.sum()


def predict_proba_matrix(model: LinearModel, X: Union[Matrix, Sequence[SparseVector]]) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != model.n_features:
        raise LabelForgeError("matrix width does not match model features")
    return _softmax(_logits(model.coefficients, model.intercepts, X))


def _stratified_folds(y: Sequence[str], k: int, seed: int) -> list[list[int]]:
    rng = random.Random(seed)
    by_class: dict[str, list[int]] = {}
    for i, label in enumerate(y):
        by_class.setdefault(label, []).append(i)
    folds: list[list[int]] = [[] for _ in range(k)]
    for label in sorted(by_class):
        idxs = by_class[label]
        rng.shuffle(idxs)
        for pos, i in enumerate(idxs):
            folds[pos % k].append(i)
    return folds


def _fold_metrics(y_true: list[str], y_pred: list[str], classes: Sequence[str]) -> ModelMetrics:
    correct = sum(1 for t, p in zip(y_true, y_pred) if t == p)
    accuracy = correct / len(y_true)
    precisions, recalls, f1s = [], [], []
    for c in classes:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    return ModelMetrics(
        accuracy=accuracy,
        macro_precision=float(np.mean(precisions)),
        macro_recall=float(np.mean(recalls)),
        macro_f1=float(np.mean(f1s)),
    )


def cross_validate(
    X: Union[Matrix, Sequence[SparseVector]],
    y: Sequence[str],
    folds: int = 5,
    seed: int = 0,
    l2_lambda: float = DEFAULT_L2,
) -> ModelMetrics:
    """Stratified k-fold metrics, k capped at the minority-class count and
    never below 2. Macro averages count zero-denominator classes as 0."""
    X = _as_matrix(X)
    y = list(y)
    classes = sorted(set(y))
    if len(classes) < 2:
        raise DegenerateTrainingSet("cross-validation requires at least 2 classes")
    if len(y) < 2:
        raise LabelForgeError("cross-validation requires at least 2 examples")
    min_count = min(y.count(c) for c in classes)
    k = max(2, min(folds, min_count))
    k = min(k, len(y))
    fold_sets = _stratified_folds(y, k, seed)
    X_csr = sparse.csr_matrix(X)
    per_fold: list[ModelMetrics] = []
    for fold in fold_sets:
        if not fold:
            continue
        test_idx = sorted(fold)
        test_set = set(test_idx)
        train_idx = [i for i in range(len(y)) if i not in test_set]
        y_train = [y[i] for i in train_idx]
        if len(set(y_train)) < 2:
            continue  # degenerate split (minority class of size 1)
        model = train(X_csr[train_idx], y_train, l2_lambda=l2_lambda)
        probs = predict_proba_matrix(model, X_csr[test_idx])
        preds = [model.classes[j] for j in probs.argmax(axis=1)]
        per_fold.append(_fold_metrics([y[i] for i in test_idx], preds, classes))
    if not per_fold:
        raise DegenerateTrainingSet("no fold had a trainable split")
    return ModelMetrics(
        accuracy=float(np.mean([m.accuracy for m in per_fold])),
        macro_precision=float(np.mean([m.macro_precision for m in per_fold])),
        macro_recall=float(np.mean([m.macro_recall for m in per_fold])),
        macro_f1=float(np.mean([m.macro_f1 for m in per_fold])),
    )
