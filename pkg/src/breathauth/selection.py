"""Early-termination model selection and sample-level accuracy.

The validation-accuracy curve is smoothed with a trailing moving average;
the elbow is the first point that the next four smoothed points fail to
beat by 5% (relative by default). The checkpoints at elbow-5 .. elbow+5 are
the candidates, and the one with the highest unweighted mean of
validation, intra and inter accuracy wins.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptySeries, SeriesTooShort
from .lstm import LstmModel, predict_proba

SMOOTHING_WINDOW = 20
ELBOW_GAIN = 0.05
ELBOW_LOOKAHEAD = 4
CANDIDATE_RADIUS = 5
# evaluation runs in single precision, the precision of a serialized model
EVAL_DTYPE = np.float32


def moving_average(series, window: int = SMOOTHING_WINDOW, *, centered: bool = False) -> np.ndarray:
    """Moving mean with the same length as ``series``.

    Trailing by default: ``out[i] = mean(series[max(0, i-window+1) : i+1])``.
    ``centered=True`` averages ``window`` points around ``i`` instead, using
    only the points that exist near the ends.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise EmptySeries("cannot smooth an empty series")
    if window < 1:
        raise ValueError("window must be >= 1")
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(x.size)
    if centered:
        lo = np.maximum(0, idx - (window - 1) // 2)
        hi = np.minimum(x.size, idx + window // 2 + 1)
    else:
        lo = np.maximum(0, idx - window + 1)
        hi = idx + 1
    out = (csum[hi] - csum[lo]) / (hi - lo)
    # cumulative-sum differencing can stray an ulp outside the window range
    return np.clip(out, x.min(), x.max())


@dataclass(frozen=True)
class ElbowResult:
    index: int
    no_plateau: bool


def find_elbow(smoothed, *, gain: float = ELBOW_GAIN, relative: bool = True) -> ElbowResult:
    """First index whose next four values all stay below the improvement bar.

    The bar is ``s[i] * (1 + gain)`` (relative) or ``s[i] + gain`` (absolute).
    With no such index the last index is returned with ``no_plateau`` set.
    """
    s = np.asarray(smoothed, dtype=np.float64)
    if s.size < ELBOW_LOOKAHEAD + 1:
        raise SeriesTooShort(f"need at least {ELBOW_LOOKAHEAD + 1} points, got {s.size}")
    i = int(_kernels.elbow_scan(s, float(gain), bool(relative)))
    if i < 0:
        return ElbowResult(s.size - 1, True)
    return ElbowResult(i, False)


def candidate_indices(elbow: int, length: int, radius: int = CANDIDATE_RADIUS) -> list:
    return list(range(max(0, elbow - radius), min(length - 1, elbow + radius) + 1))


class ElbowCheckpointer:
    """Keeps exactly the checkpoints the elbow rule will ask for.

    The trailing moving average is causal and the elbow is the *first*
    qualifying index, so it is fixed as soon as its four look-ahead points
    exist. Until then a ring of the last ``radius + lookahead + 1`` models
    is kept; afterwards only elbow-5 .. elbow+5 are retained. If training
    ends without a plateau the ring already holds the trailing candidates.
    """

    def __init__(self, window: int = SMOOTHING_WINDOW, gain: float = ELBOW_GAIN, relative: bool = True,
                 radius: int = CANDIDATE_RADIUS):
        self.window = window
        self.gain = gain
        self.relative = relative
        self.radius = radius
        self._ring: OrderedDict = OrderedDict()
        self._capacity = radius + ELBOW_LOOKAHEAD + 1
        self.elbow: int | None = None

    def observe(self, iteration: int, model: LstmModel, validation_acc) -> None:
        self._ring[iteration] = model.copy()
        if self.elbow is None:
            if len(validation_acc) >= ELBOW_LOOKAHEAD + 1:
                smoothed = moving_average(validation_acc, self.window)
                res = find_elbow(smoothed, gain=self.gain, relative=self.relative)
                if not res.no_plateau:
                    self.elbow = res.index
            if self.elbow is None:
                while len(self._ring) > self._capacity:
                    self._ring.popitem(last=False)
                return
        keep = range(self.elbow - self.radius, self.elbow + self.radius + 1)
        for it in [k for k in self._ring if k not in keep]:
            del self._ring[it]

    @property
    def checkpoints(self) -> dict:
        return dict(self._ring)


@dataclass(frozen=True)
class CandidateSet:
    elbow_index: int
    no_plateau: bool
    checkpoints: dict  # iteration -> LstmModel

    def __post_init__(self):
        if self.elbow_index not in self.checkpoints:
            raise ValueError(f"elbow checkpoint {self.elbow_index} missing from candidates")


def build_candidates(validation_acc, checkpoints: dict, *, window: int = SMOOTHING_WINDOW,
                     gain: float = ELBOW_GAIN, relative: bool = True, centered: bool = False) -> CandidateSet:
    smoothed = moving_average(validation_acc, window, centered=centered)
    res = find_elbow(smoothed, gain=gain, relative=relative)
    wanted = candidate_indices(res.index, len(smoothed))
    return CandidateSet(res.index, res.no_plateau, {i: checkpoints[i] for i in wanted if i in checkpoints})


# --------------------------------------------------------------------------
# accuracy


@dataclass(frozen=True)
class AccuracyResult:
    accuracy: float
    correct: int
    total: int
    excluded_clips: int

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "correct": self.correct, "total": self.total,
                "excluded_clips": self.excluded_clips}


def aggregate_clip_votes(probs, clip_index, clip_labels) -> AccuracyResult:
    """Mean probability vector per clip, argmax (lowest index on ties), compare to label."""
    probs = np.asarray(probs, dtype=np.float64)
    clip_index = np.asarray(clip_index, dtype=np.int64)
    clip_labels = np.asarray(clip_labels, dtype=np.int64)
    n_clips = clip_labels.size
    counts = np.bincount(clip_index, minlength=n_clips)
    present = counts > 0
    if not present.any():
        return AccuracyResult(0.0, 0, 0, n_clips)
    sums = np.zeros((n_clips, probs.shape[1]))
    np.add.at(sums, clip_index, probs)
    means = sums[present] / counts[present, None]
    correct = int(np.sum(np.argmax(means, axis=1) == clip_labels[present]))
    total = int(present.sum())
    return AccuracyResult(correct / total, correct, total, int(n_clips - total))


def sample_accuracy(model, windows, *, proba=None) -> AccuracyResult:
    """Per-clip accuracy over a :class:`~breathauth.dataset.WindowSet`.

    Clips that contributed no window are excluded and counted. ``proba``
    overrides the probability function (e.g. the quantized forward).
    """
    if len(windows) == 0:
        return AccuracyResult(0.0, 0, 0, len(windows.clip_ids))
    if proba is None:
        probs = predict_proba(model, windows.stack(), dtype=EVAL_DTYPE)
    else:
        probs = proba(model, windows.stack())
    return aggregate_clip_votes(probs, windows.clip_index, windows.clip_labels)


# --------------------------------------------------------------------------
# choosing the winner


@dataclass
class SelectionReport:
    elbow_index: int
    no_plateau: bool
    chosen_iteration: int
    candidates: list = field(default_factory=list)  # dicts with per-set accuracies
    history: dict = field(default_factory=dict)
    smoothing_window: int = SMOOTHING_WINDOW
    gain: float = ELBOW_GAIN
    relative: bool = True
    note: str = ("intra and inter accuracies take part in selection, so they are not "
                 "untouched held-out estimates")

    def to_json(self) -> dict:
        return {
            "elbow_index": self.elbow_index,
            "no_plateau": self.no_plateau,
            "chosen_iteration": self.chosen_iteration,
            "smoothing_window": self.smoothing_window,
            "gain": self.gain,
            "relative_gain": self.relative,
            "candidates": self.candidates,
            "history": self.history,
            "note": self.note,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def select_best(candidates: CandidateSet, splits, *, proba=None, history=None):
    """Pick the candidate with the best mean of validation/intra/inter accuracy.

    Ties go to the earliest iteration. Returns ``(model, report)``.
    """
    if not candidates.checkpoints:
        raise ValueError("no candidate checkpoints")
    rows = []
    best_key = None
    best_it = None
    for it in sorted(candidates.checkpoints):
        model = candidates.checkpoints[it]
        accs = {name: sample_accuracy(model, ws, proba=proba) for name, ws in splits.evaluation_sets.items()}
        mean = float(np.mean([a.accuracy for a in accs.values()]))
        rows.append({"iteration": it, "mean": mean, **{k: v.accuracy for k, v in accs.items()},
                     "excluded_clips": {k: v.excluded_clips for k, v in accs.items()}})
        if best_key is None or mean > best_key:
            best_key, best_it = mean, it
    report = SelectionReport(
        elbow_index=candidates.elbow_index,
        no_plateau=candidates.no_plateau,
        chosen_iteration=best_it,
        candidates=rows,
        history=history.to_json() if history is not None else {},
    )
    return candidates.checkpoints[best_it], report
