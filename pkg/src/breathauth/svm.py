"""One-vs-one linear SVM baseline on flattened windows.

Each class pair gets a primal linear classifier trained with Pegasos
(stochastic sub-gradient on hinge loss + L2, step 1/(lambda*t), with the
lambda = 1/(C*n) correspondence to the usual C-SVM). Features are
standardized for training and the scaling is folded back into the stored
weights, so the saved model acts on raw flattened windows.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _kernels
from .errors import ShapeMismatch, SingleClassInput
from .selection import AccuracyResult, aggregate_clip_votes

C_GRID = (0.1, 1.0, 10.0)


def all_pairs(num_users: int) -> np.ndarray:
    return np.array(list(combinations(range(num_users), 2)), dtype=np.int64).reshape(-1, 2)


@dataclass(eq=False)
class LinearSvmModel:
    pairs: np.ndarray  # (P, 2); positive score votes for pairs[k, 0]
    weights: np.ndarray  # (P, W*D)
    bias: np.ndarray  # (P,)
    num_users: int
    window_len: int
    input_dim: int

    @property
    def num_classifiers(self) -> int:
        return len(self.pairs)


def _flatten(X, window_len=None, input_dim=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ShapeMismatch(f"expected (n, W, D) windows, got shape {X.shape}")
    if window_len is not None and X.shape[1:] != (window_len, input_dim):
        raise ShapeMismatch(f"model expects ({window_len}, {input_dim}) windows, got {X.shape[1:]}")
    # row-major: time-major flattening of each W x D window
    return X.reshape(X.shape[0], -1)


def svm_train(X, labels, C: float = 1.0, epochs: int = 20, seed: int = 0, *, num_users: int | None = None,
              standardize: bool = True) -> LinearSvmModel:
    """Train N(N-1)/2 pairwise classifiers on (n, W, D) windows."""
    if C <= 0:
        raise ValueError("C must be positive")
    X = np.asarray(X, dtype=np.float64)
    Xf = _flatten(X)
    y = np.asarray(labels, dtype=np.int64)
    present = np.unique(y)
    if present.size < 2:
        raise SingleClassInput("need windows from at least two users")
    N = int(num_users if num_users is not None else present.max() + 1)

    if standardize:
        mu = Xf.mean(axis=0)
        sd = Xf.std(axis=0)
        sd[sd == 0] = 1.0
        Z = (Xf - mu) / sd
    else:
        mu = np.zeros(Xf.shape[1])
        sd = np.ones(Xf.shape[1])
        Z = Xf

    pairs = all_pairs(N)
    d = Z.shape[1]
    weights = np.zeros((len(pairs), d))
    bias = np.zeros(len(pairs))
    for k, (a, b) in enumerate(pairs):
        mask = (y == a) | (y == b)
        if not mask.any():
            continue
        Zp = np.ascontiguousarray(Z[mask])
        yp = np.where(y[mask] == a, 1.0, -1.0)
        lam = 1.0 / (C * len(yp))
        rng = np.random.default_rng([seed, int(a), int(b)])
        w = np.zeros(d + 1)
        t = 0
        for _ in range(epochs):
            t = _kernels.pegasos_pass(Zp, yp, rng.permutation(len(yp)), w, lam, t)
        weights[k] = w[:d] / sd
        bias[k] = w[d] - np.dot(w[:d], mu / sd)
    return LinearSvmModel(pairs, weights, bias, N, X.shape[1], X.shape[2])


def decision_values(model: LinearSvmModel, X) -> np.ndarray:
    Xf = _flatten(X, model.window_len, model.input_dim)
    return Xf @ model.weights.T + model.bias


def svm_predict_batch(model: LinearSvmModel, X) -> np.ndarray:
    """Majority vote over pairwise classifiers; ties go to the lowest user."""
    scores = decision_values(model, X)
    winners = np.where(scores > 0, model.pairs[:, 0], model.pairs[:, 1])
    votes = np.zeros((scores.shape[0], model.num_users), dtype=np.int64)
    rows = np.repeat(np.arange(scores.shape[0]), scores.shape[1])
    np.add.at(votes, (rows, winners.ravel()), 1)
    return np.argmax(votes, axis=1)


def svm_predict(model: LinearSvmModel, window) -> int:
    data = getattr(window, "data", window)
    return int(svm_predict_batch(model, np.asarray(data)[None])[0])


def svm_sample_accuracy(model: LinearSvmModel, windows) -> AccuracyResult:
    """Per-clip majority over window predictions (ties to lowest user)."""
    if len(windows) == 0:
        return AccuracyResult(0.0, 0, 0, len(windows.clip_ids))
    pred = svm_predict_batch(model, windows.stack())
    onehot = np.zeros((pred.size, model.num_users))
    onehot[np.arange(pred.size), pred] = 1.0
    return aggregate_clip_votes(onehot, windows.clip_index, windows.clip_labels)


def svm_train_select(splits, grid=C_GRID, epochs: int = 20, seed: int = 0):
    """Train one model per C in ``grid``; keep the best on the validation set.

    Returns ``(model, C, {C: validation accuracy})``.
    """
    X = splits.train.stack()
    y = splits.train.labels
    scores = {}
    best = None
    for C in grid:
        model = svm_train(X, y, C=C, epochs=epochs, seed=seed, num_users=splits.num_users)
        acc = svm_sample_accuracy(model, splits.validation).accuracy
        scores[float(C)] = acc
        if best is None or acc > best[2]:
            best = (model, float(C), acc)
    return best[0], best[1], scores
