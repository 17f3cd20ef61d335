"""Mini-batch training loop with per-iteration evaluation.

One iteration is one Adam update on one mini-batch. Batches are consecutive
slices of a seeded permutation of the training windows, reshuffled whenever
fewer than ``batch_size`` windows remain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteLoss
from .lstm import LossKind, LstmModel, batch_loss, loss_and_grads, predict_proba
from .selection import EVAL_DTYPE, ElbowCheckpointer, aggregate_clip_votes

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_iterations: int = 500
    learning_rate: float = 1e-3
    loss: LossKind = LossKind.CROSS_ENTROPY
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1 or self.max_iterations < 1:
            raise ValueError("batch_size and max_iterations must be >= 1")
        object.__setattr__(self, "loss", LossKind(self.loss))


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` in place."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class MetricHistory:
    validation_acc: list = field(default_factory=list)
    intra_acc: list = field(default_factory=list)
    inter_acc: list = field(default_factory=list)
    loss: list = field(default_factory=list)  # mini-batch loss before the update
    validation_loss: list = field(default_factory=list)

    def __len__(self):
        return len(self.loss)

    def to_json(self) -> dict:
        return {k: [float(x) for x in getattr(self, k)]
                for k in ("validation_acc", "intra_acc", "inter_acc", "loss", "validation_loss")}

    @classmethod
    def from_json(cls, d: dict) -> "MetricHistory":
        return cls(**{k: list(d.get(k, [])) for k in ("validation_acc", "intra_acc", "inter_acc", "loss",
                                                       "validation_loss")})


@dataclass
class TrainResult:
    model: LstmModel
    history: MetricHistory
    checkpoints: dict


class _EvalSet:
    """Pre-stacked windows of one evaluation set."""

    def __init__(self, ws):
        self.X = ws.stack().astype(EVAL_DTYPE) if len(ws) else None
        self.labels = ws.labels if len(ws) else None
        self.clip_index = ws.clip_index
        self.clip_labels = ws.clip_labels

    def evaluate(self, model, kind):
        if self.X is None:
            return 0.0, float("nan")
        probs = predict_proba(model, self.X, dtype=EVAL_DTYPE)
        acc = aggregate_clip_votes(probs, self.clip_index, self.clip_labels).accuracy
        return acc, batch_loss(probs, self.labels, kind)


def batch_schedule(n: int, batch_size: int, iterations: int, seed: int):
    """Yield index arrays for each iteration by cycling a seeded shuffle."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    pos = 0
    size = min(batch_size, n)
    for _ in range(iterations):
        if pos + size > n:
            perm = rng.permutation(n)
            pos = 0
        yield perm[pos : pos + size]
        pos += size


def train(model_init: LstmModel, splits, config: TrainConfig, callback=None, checkpointer=None) -> TrainResult:
    """Train for exactly ``config.max_iterations`` updates.

    After every update the validation, intra and inter sample-level
    accuracies are recorded. ``checkpointer`` (default: an
    :class:`ElbowCheckpointer`) decides which per-iteration models are kept.
    ``callback(iteration, history)`` is invoked after each iteration.
    """
    train_set = splits.train
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    present = train_set.user_set()
    if present != set(range(model_init.num_users)):
        raise ValueError(f"training set covers classes {sorted(present)}, model has {model_init.num_users}")

    model = model_init.copy()
    params = model.tensors()
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    checkpointer = checkpointer if checkpointer is not None else ElbowCheckpointer()
    evals = {name: _EvalSet(ws) for name, ws in splits.evaluation_sets.items()}
    history = MetricHistory()
    labels = train_set.labels

    for it, idx in enumerate(batch_schedule(len(train_set), config.batch_size, config.max_iterations, config.seed)):
        value, grads = loss_and_grads(model, train_set.stack(idx), labels[idx], config.loss)
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise NonFiniteLoss(f"non-finite gradient at iteration {it}")
        opt.step(params, grads)
        history.loss.append(value)
        val_acc, val_loss = evals["validation"].evaluate(model, config.loss)
        history.validation_acc.append(val_acc)
        history.validation_loss.append(val_loss)
        history.intra_acc.append(evals["intra"].evaluate(model, config.loss)[0])
        history.inter_acc.append(evals["inter"].evaluate(model, config.loss)[0])
        checkpointer.observe(it, model, history.validation_acc)
        if callback is not None:
            callback(it, history)
        if it % 50 == 0:
            log.info("iter %d loss %.4f val %.3f intra %.3f inter %.3f", it, value, val_acc,
                     history.intra_acc[-1], history.inter_acc[-1])
    return TrainResult(model, history, checkpointer.checkpoints)


def train_plain(model_init: LstmModel, X, y, config: TrainConfig) -> tuple:
    """Training without evaluation sets, for toy problems and tests.

    Returns ``(model, losses)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    model = model_init.copy()
    params = model.tensors()
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    losses = []
    for idx in batch_schedule(len(X), config.batch_size, config.max_iterations, config.seed):
        value, grads = loss_and_grads(model, X[idx], y[idx], config.loss)
        opt.step(params, grads)
        losses.append(value)
    return model, losses
