"""Acceptance suite: one test per numbered criterion.

Each test records a PASS/FAIL line via ``record_criterion``; the lines are
printed as they happen and again in the terminal summary. The assertion is
made after recording so a failing criterion still reports its measured value.
"""

import time

import numpy as np

from breathauth.audio_io import AudioClip
from breathauth.bench import bench_inference, bench_model_load
from breathauth.features import extract_features
from breathauth.lstm import init_model, loss_and_grads
from breathauth.model_store import FLAVOR_FLOAT, FLAVOR_QUANT, dumps_model, file_size, payload_bytes, save_model
from breathauth.model_store import zipped_size
from breathauth.quantize import agreement, dequantize_tensor, quantize_model, quantize_tensor
from breathauth.selection import find_elbow, moving_average
from breathauth.svm import svm_predict_batch, svm_sample_accuracy, svm_train, svm_train_select

from conftest import record_criterion
import oracles
from pipeline import run_pipeline, tree_bytes
from test_lstm import tiny_model


def test_criterion_01_model_size():
    model = init_model(10, 30, seed=0).rounded_to_float32()
    q = quantize_model(model)
    raw_f, raw_q = len(dumps_model(model)), len(dumps_model(q))
    payload = payload_bytes(FLAVOR_FLOAT, 10)
    ratio = payload_bytes(FLAVOR_QUANT, 10) / payload
    zipped = zipped_size(q)
    ok = (payload == 992_296 and raw_f == file_size(FLAVOR_FLOAT, 10) and raw_q == file_size(FLAVOR_QUANT, 10)
          and 0.24 <= ratio <= 0.27)
    record_criterion(1, ok, f"float payload {payload} B (file {raw_f} B), quant file {raw_q} B, "
                            f"payload ratio {ratio:.4f}, zipped quant {zipped} B = float/{raw_f / zipped:.2f}")
    assert ok


def test_criterion_02_gradient_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for kind in ("ce", "l2"):
        m = tiny_model(7)
        rng = np.random.default_rng(8)
        X = rng.normal(size=(4, 5, 4))
        y = np.array([0, 2, 1, 2])
        _, grads = loss_and_grads(m, X, y, kind)
        numeric = oracles.central_difference(lambda: loss_and_grads(m, X, y, kind)[0], m.tensors(), eps=1e-5)
        for g, n in zip(grads, numeric):
            rel = np.abs(g - n) / np.maximum(np.maximum(np.abs(g), np.abs(n)), 1e-6)
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    record_criterion(2, ok, f"max relative gradient error {worst:.2e} over 6 tensors x 2 losses, {elapsed:.1f} s")
    assert ok


def test_criterion_03_mfcc_oracle():
    # 100 random frames pushed through the whole front-end as one clip
    N = 441
    samples = np.random.default_rng(33).uniform(-1, 1, 100 * N)
    feats = extract_features(AudioClip(samples))
    ham = oracles.hamming(N)
    base = np.array([oracles.mfcc_reference(samples[k * N : (k + 1) * N] * ham) for k in range(100)])
    d1 = oracles.deltas_reference(base)
    ref = np.hstack([base, d1, oracles.deltas_reference(d1)])
    worst = 0.0
    for blk in range(3):
        a, r = feats[:, 32 * blk : 32 * (blk + 1)], ref[:, 32 * blk : 32 * (blk + 1)]
        # relative to the block's magnitude: single deltas can sit at zero
        worst = max(worst, float(np.max(np.abs(a - r)) / np.max(np.abs(r))))
    ok = feats.shape == (100, 96) and worst <= 1e-9
    record_criterion(3, ok, f"100 frames, max relative deviation from direct-DFT reference {worst:.2e}")
    assert ok


def test_criterion_04_quantization_bound():
    rng = np.random.default_rng(44)
    bound_ok = endpoints_ok = idem_ok = True
    worst = 0.0
    for k in range(1000):
        n = int(rng.integers(1, 500))
        scale = 10.0 ** rng.uniform(-3, 3)
        v = (rng.normal(size=n) * scale + rng.normal() * scale).astype(np.float32).astype(np.float64)
        q = quantize_tensor(v)
        back = dequantize_tensor(q)
        lo, hi = float(q.min), float(q.max)
        excess = np.abs(back - v) - ((hi - lo) / 510 + 1e-7)
        worst = max(worst, float(excess.max()))
        bound_ok &= bool(np.all(excess <= 0))
        endpoints_ok &= back[np.argmin(v)] == v.min() and back[np.argmax(v)] == v.max()
        q2 = quantize_tensor(back)
        idem_ok &= bool(np.array_equal(q2.codes, q.codes)) and (q2.min, q2.max) == (q.min, q.max)
    ok = bound_ok and endpoints_ok and idem_ok
    record_criterion(4, ok, f"1000 tensors: bound {bound_ok} (worst slack {worst:.2e}), endpoints exact "
                            f"{endpoints_ok}, idempotent {idem_ok}")
    assert ok


def _test_windows(splits):
    sets = splits.evaluation_sets
    return np.concatenate([sets[k].stack() for k in ("validation", "intra", "inter") if len(sets[k])])


def test_criterion_05_quantized_parity(synthetic_run):
    X = _test_windows(synthetic_run["splits"])
    model = synthetic_run["model"]
    rep = agreement(model, quantize_model(model), X)
    ok = rep.windows >= 1000 and rep.agreement >= 0.99
    record_criterion(5, ok, f"argmax agreement {rep.agreement:.4f} on {rep.windows} windows, "
                            f"max logit delta {rep.max_abs_logit_delta:.3e}")
    assert ok


def _chosen_row(report):
    return next(r for r in report.candidates if r["iteration"] == report.chosen_iteration)


def test_criterion_06_end_to_end(synthetic_run):
    report = synthetic_run["report"]
    row = _chosen_row(report)
    ok = row["intra"] >= 0.9
    record_criterion(6, ok, f"5 users x 40 sniff clips, elbow {report.elbow_index} "
                            f"(no plateau {report.no_plateau}), chosen iteration {report.chosen_iteration}: "
                            f"validation {row['validation']:.3f} intra {row['intra']:.3f} inter {row['inter']:.3f}")
    assert ok


def _series(rng, kind):
    n = int(rng.integers(5, 200))
    if kind == 0:
        return rng.random(n)
    if kind == 1:  # saturating learning curve
        s = 1 - np.exp(-np.arange(n) / rng.uniform(1, 40)) + 0.02 * rng.normal(size=n)
        return moving_average(np.clip(s, 0, 1), 20)
    if kind == 2:  # strictly growing by more than the gain: no plateau
        return 0.1 * 1.1 ** np.arange(n)
    if kind == 3:  # plateaus with ties at the bar
        return np.round(rng.random(n), 1)
    return np.full(n, rng.random())


def test_criterion_07_elbow_oracle():
    rng = np.random.default_rng(77)
    mismatches = plateau_free = 0
    for k in range(10_000):
        s = _series(rng, k % 5)
        relative = bool(k % 2)
        r = find_elbow(s, relative=relative)
        ref = oracles.elbow_reference(list(s), relative=relative)
        mismatches += (r.index, r.no_plateau) != ref
        plateau_free += ref[1]
    ok = mismatches == 0 and plateau_free > 0
    record_criterion(7, ok, f"10000 series, {mismatches} mismatches, {plateau_free} without a plateau")
    assert ok


def test_criterion_08_latency_direction(tmp_path):
    rng = np.random.default_rng(88)
    sniff, deep = init_model(10, 30, seed=1), init_model(10, 250, seed=2)
    ts = bench_inference(sniff, list(rng.normal(size=(4, 30, 96))), reps=10, warmup=2)
    td = bench_inference(deep, list(rng.normal(size=(4, 250, 96))), reps=10, warmup=2)
    ratio = td.mean_ms / ts.mean_ms

    f32 = sniff.rounded_to_float32()
    save_model(f32, tmp_path / "f.brnn")
    save_model(quantize_model(f32), tmp_path / "q.brnn")
    lf, _ = bench_model_load(tmp_path / "f.brnn", reps=30, warmup=5)
    lq, _ = bench_model_load(tmp_path / "q.brnn", reps=30, warmup=5)
    ok = 4 <= ratio <= 16 and lq.mean_ms <= lf.mean_ms
    record_criterion(8, ok, f"deep/sniff inference {td.mean_ms:.2f}/{ts.mean_ms:.2f} ms = {ratio:.2f}, "
                            f"load quant {lq.mean_ms:.3f} ms vs float {lf.mean_ms:.3f} ms")
    assert ok


def test_criterion_09_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    run_pipeline(a)
    run_pipeline(b)
    ta, tb = tree_bytes(a), tree_bytes(b)
    differ = sorted(k for k in ta.keys() & tb.keys() if ta[k] != tb[k])
    same_names = ta.keys() == tb.keys()
    models = [k for k in ta if k.endswith((".brnn", ".bsvm"))]
    ok = same_names and not differ and bool(models)
    record_criterion(9, ok, f"{len(ta)} files compared ({len(models)} model files), differing: {differ or 'none'}")
    assert ok


def test_criterion_10_svm_baseline(synthetic_run):
    rng = np.random.default_rng(10)
    X = 0.05 * rng.normal(size=(60, 2, 4))
    y = np.repeat(np.arange(4), 15)
    for u in range(4):
        X[y == u, 0, u] += 1.0
    toy = svm_train(X, y, epochs=10)
    toy_acc = float(np.mean(svm_predict_batch(toy, X) == y))

    splits = synthetic_run["splits"]
    model, C, _ = svm_train_select(splits)
    n = splits.num_users
    svm_intra = svm_sample_accuracy(model, splits.intra).accuracy
    svm_inter = svm_sample_accuracy(model, splits.inter).accuracy
    row = _chosen_row(synthetic_run["report"])
    svm_mean = (svm_intra + svm_inter) / 2
    lstm_mean = (row["intra"] + row["inter"]) / 2
    gap = abs(svm_mean - lstm_mean)
    ok = toy_acc == 1.0 and toy.num_classifiers == 6 and model.num_classifiers == n * (n - 1) // 2 and gap <= 0.10
    record_criterion(10, ok, f"toy accuracy {toy_acc:.2f}, {model.num_classifiers} classifiers for {n} users, "
                             f"C={C}: SVM intra/inter {svm_intra:.3f}/{svm_inter:.3f} vs LSTM "
                             f"{row['intra']:.3f}/{row['inter']:.3f} (gap {gap:.3f})")
    assert ok
