"""WAV reading/writing and the synthetic breathing-clip generator.

Only the little-endian RIFF/WAVE subset with a single channel of 16-bit PCM
or 32-bit IEEE float is accepted; anything else is rejected rather than
converted.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import (
    DurationTooShort,
    IoFailure,
    MalformedHeader,
    TruncatedData,
    UnsupportedEncoding,
)

DEFAULT_SAMPLE_RATE = 44100

_FORMAT_PCM = 1
_FORMAT_FLOAT = 3
_PCM16_SCALE = 32768.0


class Gesture(str, enum.Enum):
    SNIFF = "sniff"
    DEEP = "deep"

    @classmethod
    def parse(cls, value: "Gesture | str") -> "Gesture":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


# minimum durations accepted by the generator
MIN_DURATION_MS = {Gesture.SNIFF: 200, Gesture.DEEP: 1000}


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono audio with the metadata needed by the split protocol.

    ``augmented`` is a provenance tag: clips produced by the augmentation
    module carry ``True`` and must never reach the intra/inter test sets.
    """

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    gesture: Gesture = Gesture.SNIFF
    user_id: int = 0
    session: int = 1
    clip_id: str = ""
    augmented: bool = False

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if samples.size == 0:
            raise ValueError("AudioClip needs at least one sample")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.session not in (1, 2, 3):
            raise ValueError(f"session must be 1, 2 or 3, got {self.session}")
        if self.user_id < 0:
            raise ValueError("user_id must be non-negative")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "gesture", Gesture.parse(self.gesture))

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray, **changes) -> "AudioClip":
        """Copy of this clip's metadata around new samples."""
        meta = dict(
            sample_rate_hz=self.sample_rate_hz,
            gesture=self.gesture,
            user_id=self.user_id,
            session=self.session,
            clip_id=self.clip_id,
            augmented=self.augmented,
        )
        meta.update(changes)
        return AudioClip(samples, **meta)


# --------------------------------------------------------------------------
# WAV codec


def _iter_chunks(buf: bytes):
    pos = 12
    while pos + 8 <= len(buf):
        cid, size = struct.unpack_from("<4sI", buf, pos)
        start = pos + 8
        yield cid, start, size
        pos = start + size + (size & 1)


def load_wav(path, *, gesture=Gesture.SNIFF, user_id=0, session=1, clip_id=None) -> AudioClip:
    """Read a mono 16-bit PCM or 32-bit float WAV file into an :class:`AudioClip`.

    PCM codes are scaled by 1/32768; float samples are clipped to [-1, 1].
    """
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    if len(buf) < 12:
        raise MalformedHeader("file shorter than a RIFF header")
    riff, _, wave = struct.unpack_from("<4sI4s", buf, 0)
    if riff != b"RIFF" or wave != b"WAVE":
        raise MalformedHeader(f"not a little-endian RIFF/WAVE file (magic {riff!r}/{wave!r})")

    fmt = None
    data = None
    for cid, start, size in _iter_chunks(buf):
        if cid == b"fmt ":
            if size < 16 or start + 16 > len(buf):
                raise MalformedHeader("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", buf, start)
        elif cid == b"data":
            if start + size > len(buf):
                raise TruncatedData(f"data chunk declares {size} bytes, {len(buf) - start} present")
            data = buf[start : start + size]
            break
    if fmt is None:
        raise MalformedHeader("missing fmt chunk")
    if data is None:
        raise MalformedHeader("missing data chunk")

    tag, channels, rate, _, block_align, bits = fmt
    if channels != 1:
        raise UnsupportedEncoding(f"{channels} channels; only mono is supported")
    if tag == _FORMAT_PCM and bits == 16:
        dtype = np.dtype("<i2")
    elif tag == _FORMAT_FLOAT and bits == 32:
        dtype = np.dtype("<f4")
    else:
        raise UnsupportedEncoding(f"format tag {tag} with {bits} bits per sample")
    if block_align != dtype.itemsize:
        raise MalformedHeader(f"block align {block_align} does not match {bits}-bit mono")
    if rate == 0:
        raise MalformedHeader("sample rate is zero")
    if len(data) % dtype.itemsize:
        raise TruncatedData("data chunk ends mid-sample")
    if not data:
        raise TruncatedData("data chunk is empty")

    raw = np.frombuffer(data, dtype=dtype)
    if tag == _FORMAT_PCM:
        samples = raw.astype(np.float64) / _PCM16_SCALE
    else:
        samples = np.clip(raw.astype(np.float64), -1.0, 1.0)
    return AudioClip(
        samples,
        sample_rate_hz=int(rate),
        gesture=gesture,
        user_id=user_id,
        session=session,
        clip_id=clip_id if clip_id is not None else Path(path).stem,
    )


def write_wav(clip: AudioClip, path, *, encoding: str = "pcm16") -> None:
    """Write ``clip`` as mono WAV; samples outside [-1, 1] are clipped.

    ``encoding`` is ``"pcm16"`` (default) or ``"float32"``.
    """
    samples = np.clip(clip.samples, -1.0, 1.0)
    if encoding == "pcm16":
        codes = np.clip(np.floor(samples * _PCM16_SCALE + 0.5), -32768, 32767)
        payload = codes.astype("<i2").tobytes()
        tag, bits = _FORMAT_PCM, 16
    elif encoding == "float32":
        payload = samples.astype("<f4").tobytes()
        tag, bits = _FORMAT_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    width = bits // 8
    fmt = struct.pack(
        "<HHIIHH", tag, 1, clip.sample_rate_hz, clip.sample_rate_hz * width, width, bits
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    try:
        with open(path, "wb") as fh:
            fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


# --------------------------------------------------------------------------
# synthetic generator

# log-uniform bands the resonances are drawn from, one per resonance
_RESONANCE_BANDS_HZ = ((250.0, 800.0), (900.0, 2400.0), (2700.0, 6500.0))
_TARGET_RMS = 0.12
_NOISE_FLOOR = 0.004


@dataclass(frozen=True)
class SynthProfile:
    """Per-user parameters of the synthetic breathing generator.

    Noise shaped by 2-3 two-pole resonators stands in for the vocal tract;
    ``envelope_ms`` is (attack, sustain, decay) of one burst.
    """

    user_id: int
    resonance_hz: tuple
    bandwidth_hz: tuple
    envelope_ms: tuple = (40.0, 100.0, 60.0)
    seed: int = 0
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    resonance_gain: tuple = field(default=())

    def __post_init__(self):
        if not 1 <= len(self.resonance_hz) <= 3:
            raise ValueError("profile needs 1-3 resonances")
        if len(self.bandwidth_hz) != len(self.resonance_hz):
            raise ValueError("one bandwidth per resonance")
        nyq = self.sample_rate_hz / 2
        if any(not 0 < f < nyq for f in self.resonance_hz):
            raise ValueError("resonances must lie strictly inside (0, Nyquist)")
        if not self.resonance_gain:
            object.__setattr__(self, "resonance_gain", tuple(1.0 for _ in self.resonance_hz))

    @classmethod
    def for_user(cls, user_id: int, seed: int, sample_rate_hz: int = DEFAULT_SAMPLE_RATE):
        """Draw a user's profile deterministically from ``(seed, user_id)``."""
        rng = np.random.default_rng([seed, user_id, 0x5EED])
        n_res = 3 if sample_rate_hz >= 16000 else 2
        freqs, bws, gains = [], [], []
        for lo, hi in _RESONANCE_BANDS_HZ[:n_res]:
            f = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
            freqs.append(round(f, 3))
            bws.append(round(f * rng.uniform(0.04, 0.08), 3))
            gains.append(round(float(rng.uniform(0.4, 1.0)), 4))
        envelope = (
            round(float(rng.uniform(20, 60)), 3),
            round(float(rng.uniform(60, 160)), 3),
            round(float(rng.uniform(30, 90)), 3),
        )
        return cls(
            user_id=user_id,
            resonance_hz=tuple(freqs),
            bandwidth_hz=tuple(bws),
            envelope_ms=envelope,
            seed=seed,
            sample_rate_hz=sample_rate_hz,
            resonance_gain=tuple(gains),
        )


def _resonate(noise, freq, bw, fs):
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    out = lfilter([1.0 - r], [1.0, -2.0 * r * np.cos(theta), r * r], noise)
    return out / (np.sqrt(np.mean(out**2)) + 1e-12)


def _ramp_burst(n, attack, decay):
    env = np.ones(n)
    attack = min(attack, n // 3)
    decay = min(decay, n // 3)
    if attack > 0:
        env[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    if decay > 0:
        env[n - decay :] = 0.5 + 0.5 * np.cos(np.pi * (np.arange(decay) + 1) / decay)
    return env


def gesture_envelope(profile: SynthProfile, gesture: Gesture, n: int) -> np.ndarray:
    """Amplitude envelope: two bursts for a sniff, one sustained burst for a deep breath."""
    fs = profile.sample_rate_hz
    attack = int(profile.envelope_ms[0] * fs / 1000)
    decay = int(profile.envelope_ms[2] * fs / 1000)
    env = np.zeros(n)
    if gesture is Gesture.SNIFF:
        # 10% lead, 35% burst, 10% gap, 35% burst, 10% tail
        burst = int(0.35 * n)
        for start in (int(0.10 * n), int(0.55 * n)):
            env[start : start + burst] = _ramp_burst(burst, attack, decay)
    else:
        start, stop = int(0.05 * n), int(0.95 * n)
        env[start:stop] = _ramp_burst(stop - start, 4 * attack, 4 * decay)
    return env


def synthesize_clip(
    profile: SynthProfile,
    gesture,
    duration_ms: int,
    *,
    take: int = 0,
    session: int = 1,
    clip_id: str | None = None,
) -> AudioClip:
    """Generate one breathing clip for ``profile``.

    The output is a pure function of the arguments. ``take`` selects an
    independent noise realization (and a small +/-3% resonance jitter) so
    that repeated recordings of the same user differ.
    """
    gesture = Gesture.parse(gesture)
    if duration_ms < MIN_DURATION_MS[gesture]:
        raise DurationTooShort(
            f"{gesture.value} clips need >= {MIN_DURATION_MS[gesture]} ms, got {duration_ms}"
        )
    fs = profile.sample_rate_hz
    n = int(round(duration_ms * fs / 1000))
    gcode = 0 if gesture is Gesture.SNIFF else 1
    rng = np.random.default_rng([profile.seed, profile.user_id, gcode, take])

    noise = rng.standard_normal(n)
    jitter = rng.uniform(-0.03, 0.03, size=len(profile.resonance_hz))
    voiced = np.zeros(n)
    for f, bw, gain, j in zip(profile.resonance_hz, profile.bandwidth_hz, profile.resonance_gain, jitter):
        voiced += gain * _resonate(noise, f * (1 + j), bw, fs)

    env = gesture_envelope(profile, gesture, n)
    signal = voiced * env
    signal *= _TARGET_RMS / (np.sqrt(np.mean(signal**2)) + 1e-12)
    signal += _NOISE_FLOOR * rng.standard_normal(n)
    return AudioClip(
        np.clip(signal, -1.0, 1.0),
        sample_rate_hz=fs,
        gesture=gesture,
        user_id=profile.user_id,
        session=session,
        clip_id=clip_id if clip_id is not None else f"u{profile.user_id}-{gesture.value}-t{take}",
    )
