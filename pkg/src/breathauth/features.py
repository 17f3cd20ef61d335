"""MFCC + delta + double-delta front-end and fixed-length windowing.

Per 10 ms frame: Hamming weighting, pre-emphasis, zero-padded magnitude
spectrum, 64 triangular mel filters over 0..Nyquist, natural log (floored),
orthonormal DCT-II, first 32 coefficients. Deltas use an HTK-style
regression of half-width 2 with edge replication.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dct

from .audio_io import AudioClip
from .errors import ClipTooShort, MalformedHeader, TruncatedData

NUM_CEPS = 32
NUM_FILTERS = 64
NUM_FEATURES = 3 * NUM_CEPS
PRE_EMPHASIS = 0.97
LOG_FLOOR = 1e-10
DELTA_WIDTH = 2

SNIFF_WINDOWS = (20, 25, 30, 35)
DEEP_WINDOWS = (200, 250, 300, 350)
OVERLAPS = (0.9, 0.7, 0.5)


def frame_length(sample_rate_hz: int) -> int:
    """Samples per 10 ms frame."""
    return int(sample_rate_hz // 100)


def fft_size(n: int) -> int:
    return 1 << (n - 1).bit_length()


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def mel_filterbank(sample_rate_hz: int, nfft: int, num_filters: int = NUM_FILTERS) -> np.ndarray:
    """(num_filters, nfft//2 + 1) triangular filters, equally spaced in mel.

    Filters are evaluated at the exact bin frequencies, so at coarse FFT
    resolution the lowest filters can be empty; their energy then hits the
    log floor.
    """
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), num_filters + 2))
    freqs = np.arange(nfft // 2 + 1) * sample_rate_hz / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.flags.writeable = False
    return fb


def frame_signal(clip: AudioClip) -> np.ndarray:
    """Split into non-overlapping 10 ms frames and apply a Hamming window.

    Returns a (T, N) array; a trailing partial frame is dropped.
    """
    n = frame_length(clip.sample_rate_hz)
    t = clip.samples.size // n
    if t == 0:
        raise ClipTooShort(f"{clip.samples.size} samples is shorter than one {n}-sample frame")
    frames = clip.samples[: t * n].reshape(t, n)
    return frames * np.hamming(n)


def mfcc_frames(frames: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    """32 MFCCs for each row of an already-weighted (T, N) frame array."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    emph = frames.copy()
    emph[:, 1:] -= PRE_EMPHASIS * frames[:, :-1]
    nfft = fft_size(frames.shape[1])
    mag = np.abs(np.fft.rfft(emph, n=nfft, axis=1))
    energies = mag @ mel_filterbank(sample_rate_hz, nfft).T
    logs = np.log(np.maximum(energies, LOG_FLOOR))
    return dct(logs, type=2, norm="ortho", axis=1)[:, :NUM_CEPS]


def mfcc(frame: np.ndarray, sample_rate_hz: int = 44100) -> np.ndarray:
    """32 MFCCs of a single weighted frame."""
    return mfcc_frames(np.asarray(frame)[None, :], sample_rate_hz)[0]


def deltas(coeffs: np.ndarray, width: int = DELTA_WIDTH) -> np.ndarray:
    """Regression deltas along axis 0 with edge replication."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    T = coeffs.shape[0]
    padded = np.concatenate([np.repeat(coeffs[:1], width, 0), coeffs, np.repeat(coeffs[-1:], width, 0)])
    out = np.zeros_like(coeffs)
    for k in range(1, width + 1):
        out += k * (padded[width + k : width + k + T] - padded[width - k : width - k + T])
    return out / (2.0 * sum(k * k for k in range(1, width + 1)))


def add_deltas(base: np.ndarray) -> np.ndarray:
    """Stack base coefficients, deltas and double-deltas into (T, 3*C)."""
    base = np.asarray(base, dtype=np.float64)
    if base.ndim != 2 or base.shape[0] < 1:
        raise ValueError("add_deltas expects a non-empty (T, C) matrix")
    d1 = deltas(base)
    return np.hstack([base, d1, deltas(d1)])


def extract_features(clip: AudioClip) -> np.ndarray:
    """Full front-end: clip -> (T, 96) MFCC/delta/double-delta matrix."""
    frames = frame_signal(clip)
    return add_deltas(mfcc_frames(frames, clip.sample_rate_hz))


# --------------------------------------------------------------------------
# windowing


@dataclass(frozen=True)
class WindowConfig:
    window_len_frames: int
    overlap_fraction: float = 0.9

    def __post_init__(self):
        if self.window_len_frames < 1:
            raise ValueError("window length must be >= 1 frame")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValueError("overlap must be in [0, 1)")

    @property
    def stride(self) -> int:
        # round first: 30 * (1 - 0.9) is 2.9999999999999996 in binary floating point
        raw = round(self.window_len_frames * (1.0 - self.overlap_fraction), 9)
        return max(1, math.floor(raw))


@dataclass(frozen=True, eq=False)
class FeatureWindow:
    data: np.ndarray
    label: int
    source_clip: str
    window_index: int


def window_starts(num_frames: int, window_len: int, stride: int) -> range:
    if num_frames < window_len:
        return range(0)
    return range(0, num_frames - window_len + 1, stride)


def make_windows(frames: np.ndarray, config: WindowConfig, *, label: int = 0, source_clip: str = "") -> list:
    """Slice a (T, 96) matrix into overlapping windows.

    Windows are read-only views of ``frames``. A matrix shorter than one
    window yields an empty list; the caller records such clips as skipped.
    """
    frames = np.asarray(frames)
    W = config.window_len_frames
    out = []
    for k, s in enumerate(window_starts(frames.shape[0], W, config.stride)):
        view = frames[s : s + W]
        view.flags.writeable = False
        out.append(FeatureWindow(view, label, source_clip, k))
    return out


# --------------------------------------------------------------------------
# BFEA dump: "BFEA", u32 T, u32 D, T*D little-endian f64 row-major

_BFEA_HEADER = struct.Struct("<4sII")


def dump_features(frames: np.ndarray, path) -> int:
    frames = np.ascontiguousarray(frames, dtype="<f8")
    if frames.ndim != 2:
        raise ValueError("feature dump expects a 2-D matrix")
    blob = _BFEA_HEADER.pack(b"BFEA", *frames.shape) + frames.tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def load_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _BFEA_HEADER.size:
        raise TruncatedData("feature file shorter than its header")
    magic, t, d = _BFEA_HEADER.unpack_from(blob)
    if magic != b"BFEA":
        raise MalformedHeader(f"bad feature-dump magic {magic!r}")
    need = _BFEA_HEADER.size + 8 * t * d
    if len(blob) < need:
        raise TruncatedData(f"feature file has {len(blob)} bytes, header promises {need}")
    return np.frombuffer(blob, dtype="<f8", count=t * d, offset=_BFEA_HEADER.size).reshape(t, d).copy()
