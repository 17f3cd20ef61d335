import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from breathauth.audio_io import AudioClip
from breathauth.errors import ClipTooShort, MalformedHeader
from breathauth.features import (
    NUM_FEATURES,
    WindowConfig,
    add_deltas,
    dump_features,
    extract_features,
    fft_size,
    frame_signal,
    load_features,
    make_windows,
    mel_filterbank,
    mfcc,
    mfcc_frames,
)

import oracles

SR = 44100
N = 441


def test_frame_count_and_length():
    frames = frame_signal(AudioClip(np.zeros(88200)))
    assert frames.shape == (200, 441)


def test_trailing_partial_frame_dropped():
    assert frame_signal(AudioClip(np.zeros(3 * N + 440))).shape == (3, N)


def test_too_short_for_a_frame():
    with pytest.raises(ClipTooShort):
        frame_signal(AudioClip(np.zeros(N - 1)))


def test_hamming_curve():
    frames = frame_signal(AudioClip(np.ones(N)))
    assert frames[0, 0] == pytest.approx(0.08, abs=1e-15)
    assert frames[0, (N - 1) // 2] == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(frames[0], oracles.hamming(N), atol=1e-15)


def test_frames_cover_consecutive_samples():
    x = np.random.default_rng(0).uniform(-1, 1, 5 * N)
    frames = frame_signal(AudioClip(x))
    w = oracles.hamming(N)
    for t in range(5):
        np.testing.assert_allclose(frames[t], x[t * N : (t + 1) * N] * w, atol=1e-15)


def test_one_frame_shift_shifts_sequence():
    x = np.random.default_rng(1).uniform(-0.5, 0.5, 8 * N)
    a = extract_features(AudioClip(x))
    b = extract_features(AudioClip(x[N:]))
    np.testing.assert_allclose(mfcc_frames(frame_signal(AudioClip(x)), SR)[1:],
                               mfcc_frames(frame_signal(AudioClip(x[N:])), SR), rtol=1e-12, atol=1e-12)
    assert a.shape[0] == b.shape[0] + 1


def test_fft_size_is_512():
    assert fft_size(N) == 512


def test_silence_gives_floor_constant():
    c = mfcc(np.zeros(N))
    assert c[0] == pytest.approx(math.log(1e-10) * 8.0, rel=1e-14)
    np.testing.assert_allclose(c[1:], 0.0, atol=1e-12)


def test_filterbank_matches_oracle():
    np.testing.assert_allclose(mel_filterbank(SR, 512), oracles.mel_filters(SR, 512), atol=1e-14)


def test_tone_at_filter_center_dominates_non_adjacent():
    nfft = 512
    fb = mel_filterbank(SR, nfft)
    m = 30
    peak_bin = int(np.argmax(fb[m]))
    f = peak_bin * SR / nfft
    t = np.arange(N) / SR
    frame = np.sin(2 * np.pi * f * t) * oracles.hamming(N)
    mag = oracles.direct_dft_magnitude(frame, nfft)
    energy = fb @ mag
    others = [k for k in range(fb.shape[0]) if abs(k - m) > 1]
    assert energy[m] > energy[others].max()


def test_mfcc_golden_values():
    # frozen from the direct-DFT oracle: 0.5-amplitude 1 kHz tone, one Hamming frame
    t = np.arange(N) / SR
    frame = 0.5 * np.sin(2 * np.pi * 1000 * t) * oracles.hamming(N)
    expected = [-27.784194271910696, -3.3431562235584398, -5.455575964417007, -7.698412907231394,
                -7.2239147713353775]
    np.testing.assert_allclose(mfcc(frame)[:5], expected, rtol=1e-9)


def test_mfcc_matches_direct_dft_on_random_frames():
    rng = np.random.default_rng(3)
    for _ in range(10):
        frame = rng.uniform(-1, 1, N) * oracles.hamming(N)
        ref = oracles.mfcc_reference(frame)
        np.testing.assert_allclose(mfcc(frame), ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())


def test_constant_sequence_has_zero_deltas():
    out = add_deltas(np.full((7, 32), 2.5))
    assert out.shape == (7, 96)
    assert not out[:, 32:].any()


def test_ramp_delta_interior():
    ramp = np.arange(10, dtype=float)[:, None].repeat(32, axis=1)
    out = add_deltas(ramp)
    np.testing.assert_allclose(out[2:-2, 32:64], 1.0, atol=1e-15)
    # double-delta of a ramp vanishes away from the replicated edges
    np.testing.assert_allclose(out[4:-4, 64:], 0.0, atol=1e-15)


def test_deltas_match_oracle():
    c = np.random.default_rng(4).normal(size=(9, 32))
    out = add_deltas(c)
    d1 = oracles.deltas_reference(c)
    np.testing.assert_allclose(out[:, 32:64], d1, atol=1e-13)
    np.testing.assert_allclose(out[:, 64:], oracles.deltas_reference(d1), atol=1e-13)


def test_single_frame_deltas():
    out = add_deltas(np.ones((1, 32)))
    assert out.shape == (1, 96) and not out[:, 32:].any()


def test_extract_features_shape():
    x = np.random.default_rng(5).uniform(-0.3, 0.3, 4410 * 3 + 100)
    assert extract_features(AudioClip(x)).shape == (30, NUM_FEATURES)


@pytest.mark.parametrize("W,overlap,stride", [(30, 0.9, 3), (25, 0.9, 2), (20, 0.9, 2), (35, 0.9, 3),
                                              (30, 0.7, 9), (30, 0.5, 15), (250, 0.9, 25), (350, 0.5, 175)])
def test_stride(W, overlap, stride):
    assert WindowConfig(W, overlap).stride == stride


def test_window_examples():
    frames = np.random.default_rng(6).normal(size=(200, 96))
    wins = make_windows(frames, WindowConfig(30, 0.9))
    assert len(wins) == 57
    assert make_windows(frames[:25], WindowConfig(30, 0.9)) == []
    for ov in (0.5, 0.7, 0.9):
        one = make_windows(frames[:30], WindowConfig(30, ov))
        assert len(one) == 1 and np.array_equal(one[0].data, frames[:30])


def test_windows_are_read_only_views():
    frames = np.random.default_rng(7).normal(size=(60, 96))
    wins = make_windows(frames, WindowConfig(30, 0.5), label=2, source_clip="c")
    for k, w in enumerate(wins):
        assert np.shares_memory(w.data, frames)
        assert np.array_equal(w.data, frames[k * 15 : k * 15 + 30])
        assert (w.label, w.source_clip, w.window_index) == (2, "c", k)
        with pytest.raises(ValueError):
            w.data[0, 0] = 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 400), st.integers(1, 60), st.sampled_from([0.5, 0.7, 0.9]))
def test_window_count_property(T, W, overlap):
    cfg = WindowConfig(W, overlap)
    wins = make_windows(np.zeros((T, 2)), cfg)
    assert len(wins) == oracles.window_count_reference(T, W, cfg.stride)
    if T >= W:
        assert len(wins) == (T - W) // cfg.stride + 1


def test_feature_dump_round_trip(tmp_path):
    m = np.random.default_rng(8).normal(size=(13, 96))
    n = dump_features(m, tmp_path / "f.bfea")
    assert n == 12 + 13 * 96 * 8
    assert np.array_equal(load_features(tmp_path / "f.bfea"), m)
    raw = bytearray((tmp_path / "f.bfea").read_bytes())
    raw[:4] = b"XXXX"
    (tmp_path / "g.bfea").write_bytes(bytes(raw))
    with pytest.raises(MalformedHeader):
        load_features(tmp_path / "g.bfea")
