"""Training-set expansion by time-axis warping and amplitude scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip


@dataclass(frozen=True)
class AugmentConfig:
    copies_per_sample: int = 10
    scale_low: float = 0.8
    scale_high: float = 1.2
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.scale_low < self.scale_high:
            raise ValueError("need 0 < scale_low < scale_high")
        if self.copies_per_sample < 0:
            raise ValueError("copies_per_sample must be >= 0")


def time_warp(clip: AudioClip, factor: float) -> AudioClip:
    """Resample by linear interpolation to ``round(len * factor)`` samples.

    The sample rate is left unchanged, so duration and pitch move together:
    a tone at f Hz comes out at f / factor Hz.
    """
    if factor <= 0:
        raise ValueError("warp factor must be positive")
    n = clip.samples.size
    m = max(1, math.floor(n * factor + 0.5))
    positions = np.arange(m) / factor
    warped = np.interp(positions, np.arange(n), clip.samples)
    return clip.with_samples(warped)


def amplitude_scale(clip: AudioClip, factor: float) -> AudioClip:
    if factor <= 0:
        raise ValueError("amplitude factor must be positive")
    return clip.with_samples(np.clip(clip.samples * factor, -1.0, 1.0))


def expand_training_set(clips, config: AugmentConfig) -> list:
    """Each original followed by ``copies_per_sample`` warped+scaled variants.

    All factors are drawn up front from ``config.seed``: per copy one warp
    factor and one independent amplitude factor, both U(scale_low, scale_high).
    """
    clips = list(clips)
    if not clips:
        raise ValueError("expand_training_set needs at least one clip")
    rng = np.random.default_rng(config.seed)
    factors = rng.uniform(config.scale_low, config.scale_high, size=(len(clips), config.copies_per_sample, 2))
    out = []
    for clip, draws in zip(clips, factors):
        out.append(clip)
        for k, (warp, gain) in enumerate(draws):
            variant = amplitude_scale(time_warp(clip, float(warp)), float(gain))
            out.append(variant.with_samples(variant.samples, clip_id=f"{clip.clip_id}~aug{k}", augmented=True))
    return out
