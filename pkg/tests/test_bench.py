import numpy as np
import pytest

from breathauth.audio_io import SynthProfile, synthesize_clip
from breathauth.bench import (
    TimingStats,
    bench_feature_extraction,
    bench_inference,
    bench_model_load,
    render_table,
    run_bench,
)
from breathauth.errors import InvalidRepetitionCount, IoFailure
from breathauth.features import WindowConfig, extract_features, make_windows
from breathauth.lstm import init_model
from breathauth.model_store import save_model


def test_single_rep_stats():
    s = TimingStats.from_samples([3.5])
    assert s.mean_ms == s.min_ms == s.max_ms == 3.5 and s.std_ms == 0.0


def test_stats_recompute_from_samples():
    x = [1.0, 2.0, 4.0, 8.0]
    s = TimingStats.from_samples(x)
    assert s.mean_ms == pytest.approx(np.mean(x)) and s.std_ms == pytest.approx(np.std(x, ddof=1))
    assert s.total_ms == 15.0 and s.count == 4
    assert set(s.to_json()) == {"mean_ms", "std_ms", "min_ms", "max_ms", "total_ms", "count"}


def test_zero_reps_rejected(tmp_path):
    m = init_model(2, 5, seed=0)
    with pytest.raises(InvalidRepetitionCount):
        bench_inference(m, [np.zeros((5, 96))], reps=0)
    with pytest.raises(InvalidRepetitionCount):
        bench_inference(m, [np.zeros((5, 96))], reps=1, warmup=-1)


def test_inference_counts_exclude_warmup():
    m = init_model(2, 5, seed=0)
    s = bench_inference(m, [np.zeros((5, 96))] * 3, reps=4, warmup=2)
    assert s.count == 12 and len(s.samples_ms) == 12
    assert s.total_ms >= 12 * s.min_ms - 1e-9
    assert s.min_ms <= s.mean_ms <= s.max_ms


def test_model_load_records_size(tmp_path):
    p = tmp_path / "m.brnn"
    n = save_model(init_model(3, 5, seed=0), p)
    stats, size = bench_model_load(p, reps=2, warmup=0)
    assert size == n == p.stat().st_size and stats.count == 2
    with pytest.raises(IoFailure):
        bench_model_load(tmp_path / "missing.brnn", reps=1)


def _sniff(user, seed):
    return synthesize_clip(SynthProfile.for_user(user, seed), "sniff", 400)


def test_sniff_budgets():
    clip = _sniff(0, 1)
    cfg = WindowConfig(30, 0.9)
    fe = bench_feature_extraction([clip], cfg, reps=5, warmup=1)
    assert fe.min_ms < 100
    win = make_windows(extract_features(clip), cfg)[0]
    inf = bench_inference(init_model(10, 30, seed=0), [win], reps=5, warmup=1)
    assert inf.min_ms < 50


def test_run_bench_report(tmp_path):
    clips = {"sniff": [_sniff(u, 2) for u in range(2)]}
    report = run_bench({"sniff": init_model(2, 30, seed=0)}, clips, {"sniff": WindowConfig(30, 0.9)}, tmp_path,
                       reps=2, warmup=0, pin=False, max_windows=2)
    doc = report.to_json()
    assert set(doc["model_load"]["sniff"]) == {"float", "quant"}
    sizes = doc["sizes"]["sniff"]
    assert sizes["float"]["raw"] > sizes["quant"]["raw"]
    assert "sniff" in render_table(report)
