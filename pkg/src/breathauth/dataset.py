"""Session-based split protocol: train/validation/intra/inter window sets.

Per user, the first clips of sessions 1+2 (session order, then index) are
augmented, featurized and windowed; the pooled windows of all users are
shuffled once and cut 80/20 into train/validation. The remaining session-2
clips form the intra set and session-3 clips the inter set; neither is
augmented.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, Gesture, SynthProfile, load_wav, synthesize_clip
from .augment import AugmentConfig, expand_training_set
from .errors import InsufficientSamples
from .features import FeatureWindow, WindowConfig, extract_features, window_starts

log = logging.getLogger(__name__)

STRICT_SESSION_COUNTS = (30, 30, 10)
STRICT_TRAIN_CLIPS = 50
TRAIN_FRACTION = 0.8


# --------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ManifestEntry:
    user: int
    gesture: Gesture
    session: int
    index: int
    path: str | None = None
    synth: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "gesture", Gesture.parse(self.gesture))
        if (self.path is None) == (self.synth is None):
            raise ValueError("manifest entry needs exactly one of path / synth")

    @property
    def clip_id(self) -> str:
        return f"u{self.user}-{self.gesture.value}-s{self.session}-{self.index:03d}"

    def to_json(self) -> dict:
        d = {"user": self.user, "gesture": self.gesture.value, "session": self.session, "index": self.index}
        if self.path is not None:
            d["path"] = self.path
        else:
            d["synth"] = self.synth
        return d


@dataclass
class Manifest:
    entries: list
    base_dir: Path = field(default_factory=Path)

    def __len__(self):
        return len(self.entries)

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        entries = []
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                entries.append(
                    ManifestEntry(
                        user=int(d["user"]),
                        gesture=d["gesture"],
                        session=int(d["session"]),
                        index=int(d["index"]),
                        path=d.get("path"),
                        synth=d.get("synth"),
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad manifest entry ({exc})") from exc
        return cls(entries, path.parent)

    def save(self, path) -> None:
        lines = [json.dumps(e.to_json(), sort_keys=True) for e in self.entries]
        Path(path).write_text("\n".join(lines) + "\n")

    def gestures(self) -> set:
        return {e.gesture for e in self.entries}

    def load_clip(self, entry: ManifestEntry) -> AudioClip:
        if entry.path is not None:
            return load_wav(
                self.base_dir / entry.path,
                gesture=entry.gesture,
                user_id=entry.user,
                session=entry.session,
                clip_id=entry.clip_id,
            )
        s = entry.synth
        profile = SynthProfile.for_user(entry.user, int(s["seed"]), int(s.get("sample_rate", 44100)))
        return synthesize_clip(
            profile,
            entry.gesture,
            int(s["duration_ms"]),
            take=int(s.get("take", entry.index)),
            session=entry.session,
            clip_id=entry.clip_id,
        )


def session_counts(total: int) -> tuple:
    """Split a per-gesture clip count across sessions in the 3:3:1 ratio."""
    s3 = max(1, round(total / 7)) if total >= 3 else 0
    rest = total - s3
    return (rest + 1) // 2, rest // 2, s3


def synth_manifest(num_users: int, clips_per_gesture: int, seed: int, gestures=(Gesture.SNIFF, Gesture.DEEP),
                   sample_rate: int = 44100) -> Manifest:
    """Synthetic manifest; durations vary per clip, drawn from ``seed``."""
    entries = []
    counts = session_counts(clips_per_gesture)
    for user in range(num_users):
        for gesture in map(Gesture.parse, gestures):
            rng = np.random.default_rng([seed, user, 0 if gesture is Gesture.SNIFF else 1, 0xD0])
            take = 0
            for session, count in zip((1, 2, 3), counts):
                for index in range(count):
                    if gesture is Gesture.SNIFF:
                        dur = int(rng.integers(340, 460))
                    else:
                        dur = int(rng.integers(3600, 4400))
                    entries.append(ManifestEntry(
                        user, gesture, session, index,
                        synth={"seed": seed, "duration_ms": dur, "take": take, "sample_rate": sample_rate},
                    ))
                    take += 1
    return Manifest(entries)


# --------------------------------------------------------------------------
# window sets


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Windows over a list of per-clip (T, 96) matrices, stored by reference.

    Window ``k`` is ``clip_frames[clip_index[k]][start[k] : start[k] + W]``.
    ``clip_ids`` / ``clip_labels`` list every clip the set draws from;
    clips that produced no window are named in ``skipped_clips``.
    """

    clip_frames: tuple
    clip_ids: tuple
    clip_labels: np.ndarray
    clip_augmented: np.ndarray
    clip_index: np.ndarray
    start: np.ndarray
    window_index: np.ndarray
    window_len: int
    skipped_clips: tuple = ()

    def __len__(self):
        return int(self.clip_index.size)

    @property
    def labels(self) -> np.ndarray:
        return self.clip_labels[self.clip_index]

    def __getitem__(self, k) -> FeatureWindow:
        c = int(self.clip_index[k])
        s = int(self.start[k])
        view = self.clip_frames[c][s : s + self.window_len]
        return FeatureWindow(view, int(self.clip_labels[c]), self.clip_ids[c], int(self.window_index[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def stack(self, indices=None) -> np.ndarray:
        """Contiguous (n, W, D) copy of the selected windows."""
        idx = np.arange(len(self)) if indices is None else np.asarray(indices)
        W = self.window_len
        if idx.size == 0:
            d = self.clip_frames[0].shape[1] if self.clip_frames else 0
            return np.empty((0, W, d))
        return np.stack([self.clip_frames[self.clip_index[k]][self.start[k] : self.start[k] + W] for k in idx])

    def subset(self, indices) -> "WindowSet":
        idx = np.asarray(indices, dtype=np.int64)
        return WindowSet(
            self.clip_frames, self.clip_ids, self.clip_labels, self.clip_augmented,
            self.clip_index[idx], self.start[idx], self.window_index[idx], self.window_len, self.skipped_clips,
        )

    def user_set(self) -> set:
        return set(np.unique(self.labels).tolist())

    @classmethod
    def from_clips(cls, frames_list, clip_ids, labels, augmented, config: WindowConfig) -> "WindowSet":
        W, stride = config.window_len_frames, config.stride
        cidx, starts, widx, skipped = [], [], [], []
        for c, frames in enumerate(frames_list):
            st = window_starts(frames.shape[0], W, stride)
            if len(st) == 0:
                skipped.append(clip_ids[c])
            cidx.extend([c] * len(st))
            starts.extend(st)
            widx.extend(range(len(st)))
        for frames in frames_list:
            frames.flags.writeable = False
        return cls(
            tuple(frames_list), tuple(clip_ids),
            np.asarray(labels, dtype=np.int64), np.asarray(augmented, dtype=bool),
            np.asarray(cidx, dtype=np.int64), np.asarray(starts, dtype=np.int64),
            np.asarray(widx, dtype=np.int64), W, tuple(skipped),
        )


@dataclass(frozen=True, eq=False)
class SplitBundle:
    train: WindowSet
    validation: WindowSet
    intra: WindowSet
    inter: WindowSet
    user_ids: tuple
    window_config: WindowConfig
    gesture: Gesture

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def evaluation_sets(self) -> dict:
        return {"validation": self.validation, "intra": self.intra, "inter": self.inter}


def _partition_user(entries, strict: bool, intra_count):
    s1 = [e for e in entries if e.session == 1]
    s2 = [e for e in entries if e.session == 2]
    s3 = [e for e in entries if e.session == 3]
    if strict:
        ordered = s1 + s2
        train, intra = ordered[:STRICT_TRAIN_CLIPS], ordered[STRICT_TRAIN_CLIPS:]
        if len(train) < STRICT_TRAIN_CLIPS:
            raise InsufficientSamples(f"user {entries[0].user}: {len(train)} training clips, need 50")
        if len(intra) < 10 or any(e.session != 2 for e in intra):
            raise InsufficientSamples(f"user {entries[0].user}: need 10 held-out session-2 clips")
        if len(s3) < 10:
            raise InsufficientSamples(f"user {entries[0].user}: {len(s3)} session-3 clips, need 10")
        return train, intra, s3
    k = len(s3) if intra_count is None else intra_count
    k = min(k, len(s2))
    return s1 + s2[: len(s2) - k], s2[len(s2) - k :], s3


def make_splits(
    manifest: Manifest,
    window_config: WindowConfig,
    augment_config: AugmentConfig,
    split_seed: int,
    *,
    gesture=None,
    strict: bool = False,
    intra_count: int | None = None,
) -> SplitBundle:
    """Build the four window sets for one gesture.

    In strict mode every user must have the full 30/30/10 session layout;
    otherwise the intra set takes the last ``intra_count`` session-2 clips
    (default: as many as there are session-3 clips) and the rest of
    sessions 1+2 trains.
    """
    if gesture is None:
        gs = manifest.gestures()
        if len(gs) != 1:
            raise ValueError(f"manifest holds gestures {sorted(g.value for g in gs)}; pass gesture=")
        gesture = gs.pop()
    gesture = Gesture.parse(gesture)

    by_user: dict = {}
    for e in manifest.entries:
        if e.gesture is gesture:
            by_user.setdefault(e.user, []).append(e)
    if len(by_user) < 2:
        raise InsufficientSamples("closed-set identification needs at least two users")
    user_ids = tuple(sorted(by_user))
    label_of = {u: k for k, u in enumerate(user_ids)}

    train_entries, intra_entries, inter_entries = [], [], []
    for u in user_ids:
        entries = sorted(by_user[u], key=lambda e: (e.session, e.index))
        tr, it, ie = _partition_user(entries, strict, intra_count)
        train_entries += tr
        intra_entries += it
        inter_entries += ie

    def featurize(clips):
        frames = [extract_features(c) for c in clips]
        return WindowSet.from_clips(
            frames, [c.clip_id for c in clips], [label_of[c.user_id] for c in clips],
            [c.augmented for c in clips], window_config,
        )

    train_clips = expand_training_set([manifest.load_clip(e) for e in train_entries], augment_config)
    pool = featurize(train_clips)
    intra = featurize([manifest.load_clip(e) for e in intra_entries])
    inter = featurize([manifest.load_clip(e) for e in inter_entries])

    order = np.random.default_rng(split_seed).permutation(len(pool))
    n_train = int(round(TRAIN_FRACTION * len(pool)))
    bundle = SplitBundle(
        train=pool.subset(order[:n_train]),
        validation=pool.subset(order[n_train:]),
        intra=intra,
        inter=inter,
        user_ids=user_ids,
        window_config=window_config,
        gesture=gesture,
    )
    everyone = set(range(len(user_ids)))
    for name, ws in [("train", bundle.train), ("validation", bundle.validation),
                     ("intra", bundle.intra), ("inter", bundle.inter)]:
        missing = everyone - ws.user_set()
        if missing:
            msg = f"{name} set has no windows for users {sorted(user_ids[m] for m in missing)}"
            if strict:
                raise InsufficientSamples(msg)
            log.warning(msg)
    return bundle
