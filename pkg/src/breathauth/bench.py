"""Latency and size measurements: feature extraction, model load, inference.

Every timed region brackets only the operation under test, using the
monotonic ``perf_counter_ns`` clock. Warmup calls run first and are
discarded. Benchmarks are meant to run alone, pinned to one core when the
platform allows it.
"""

from __future__ import annotations

import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidRepetitionCount, IoFailure
from .features import WindowConfig, extract_features, make_windows
from .lstm import LstmModel, forward
from .model_store import load_model, save_model, zipped_size
from .quantize import QuantizedModel, quantize_model

DEFAULT_REPS = 30
DEFAULT_WARMUP = 5


@dataclass(frozen=True)
class TimingStats:
    mean_ms: float
    std_ms: float  # sample standard deviation (0 for a single run)
    min_ms: float
    max_ms: float
    total_ms: float
    count: int
    samples_ms: tuple = field(repr=False, default=())

    @classmethod
    def from_samples(cls, samples_ms) -> "TimingStats":
        x = np.asarray(samples_ms, dtype=np.float64)
        if x.size == 0:
            raise InvalidRepetitionCount("no timings recorded")
        return cls(
            mean_ms=float(x.mean()),
            std_ms=float(x.std(ddof=1)) if x.size > 1 else 0.0,
            min_ms=float(x.min()),
            max_ms=float(x.max()),
            total_ms=float(x.sum()),
            count=int(x.size),
            samples_ms=tuple(float(v) for v in x),
        )

    def to_json(self, with_samples: bool = False) -> dict:
        d = {"mean_ms": self.mean_ms, "std_ms": self.std_ms, "min_ms": self.min_ms, "max_ms": self.max_ms,
             "total_ms": self.total_ms, "count": self.count}
        if with_samples:
            d["samples_ms"] = list(self.samples_ms)
        return d


def _check_reps(reps: int, warmup: int):
    if reps < 1:
        raise InvalidRepetitionCount(f"repetitions must be >= 1, got {reps}")
    if warmup < 0:
        raise InvalidRepetitionCount(f"warmup must be >= 0, got {warmup}")


def _timed(fn, *args) -> float:
    t0 = time.perf_counter_ns()
    fn(*args)
    return (time.perf_counter_ns() - t0) / 1e6


def _extract_and_window(clip, config):
    return make_windows(extract_features(clip), config)


def bench_feature_extraction(clips, config: WindowConfig, reps: int = DEFAULT_REPS,
                             warmup: int = DEFAULT_WARMUP) -> TimingStats:
    """Per-clip time of frame -> MFCC -> deltas -> windows."""
    _check_reps(reps, warmup)
    clips = list(clips)
    if not clips:
        raise ValueError("no clips to time")
    for _ in range(warmup):
        for clip in clips:
            _extract_and_window(clip, config)
    samples = [_timed(_extract_and_window, clip, config) for _ in range(reps) for clip in clips]
    return TimingStats.from_samples(samples)


def bench_model_load(path, reps: int = DEFAULT_REPS, warmup: int = DEFAULT_WARMUP) -> tuple:
    """Re-read and parse the model file each repetition.

    The OS page cache is not controlled, so after the warmup the file
    bytes are most likely cached. Returns ``(stats, file_size_bytes)``.
    """
    _check_reps(reps, warmup)
    try:
        size = Path(path).stat().st_size
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    for _ in range(warmup):
        load_model(path)
    return TimingStats.from_samples([_timed(load_model, path) for _ in range(reps)]), size


def bench_inference(model, windows, reps: int = DEFAULT_REPS, warmup: int = DEFAULT_WARMUP) -> TimingStats:
    """Per-window forward time; a quantized model is dequantized beforehand."""
    _check_reps(reps, warmup)
    data = [np.ascontiguousarray(getattr(w, "data", w), dtype=np.float64) for w in windows]
    if not data:
        raise ValueError("need at least one window")
    if isinstance(model, QuantizedModel):
        model = model.dequantized()
    for _ in range(warmup):
        for x in data:
            forward(model, x)
    return TimingStats.from_samples([_timed(forward, model, x) for _ in range(reps) for x in data])


def pin_to_one_core() -> bool:
    """Restrict this process to a single CPU where supported."""
    if not hasattr(os, "sched_setaffinity"):
        return False
    try:
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, {cpus[0]})
        return True
    except OSError:
        return False


def machine_descriptor() -> str:
    return (f"{platform.system()} {platform.release()} {platform.machine()} | "
            f"python {platform.python_version()} | numpy {np.__version__} | kernels {_kernels.BACKEND} | "
            f"cpus {os.cpu_count()}")


@dataclass
class BenchReport:
    reps: int
    warmup: int
    machine: str
    pinned: bool
    feature_extraction: dict = field(default_factory=dict)  # gesture -> TimingStats
    model_load: dict = field(default_factory=dict)  # gesture -> flavor -> TimingStats
    inference: dict = field(default_factory=dict)  # gesture -> flavor -> TimingStats
    sizes: dict = field(default_factory=dict)  # gesture -> flavor -> {"raw", "zipped"}
    note: str = "model-load timings run against a warm OS page cache"

    def to_json(self) -> dict:
        def nested(d):
            return {k: (v.to_json() if isinstance(v, TimingStats) else nested(v)) for k, v in d.items()}

        return {
            "reps": self.reps,
            "warmup": self.warmup,
            "machine": self.machine,
            "pinned_single_core": self.pinned,
            "feature_extraction": nested(self.feature_extraction),
            "model_load": nested(self.model_load),
            "inference": nested(self.inference),
            "sizes": self.sizes,
            "note": self.note,
        }


def run_bench(models: dict, clips: dict, configs: dict, workdir, reps: int = DEFAULT_REPS,
              warmup: int = DEFAULT_WARMUP, pin: bool = True, max_windows: int = 8) -> BenchReport:
    """Full protocol for each gesture present in ``models``.

    ``models[g]`` is a float :class:`LstmModel`; its quantized twin is built
    here. ``clips[g]`` feeds extraction timing and supplies up to
    ``max_windows`` inference windows.
    """
    _check_reps(reps, warmup)
    pinned = pin_to_one_core() if pin else False
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    report = BenchReport(reps, warmup, machine_descriptor(), pinned)
    for gesture, model in models.items():
        if not isinstance(model, LstmModel):
            raise TypeError("run_bench expects float models; quantized twins are derived")
        cfg = configs[gesture]
        report.feature_extraction[gesture] = bench_feature_extraction(clips[gesture], cfg, reps, warmup)

        windows = []
        for clip in clips[gesture]:
            windows += make_windows(extract_features(clip), cfg)
            if len(windows) >= max_windows:
                break
        windows = windows[:max_windows]
        if not windows:
            raise ValueError(f"no {gesture} clip is long enough for a {cfg.window_len_frames}-frame window")

        flavors = {"float": model.rounded_to_float32(), "quant": quantize_model(model)}
        report.model_load[gesture] = {}
        report.inference[gesture] = {}
        report.sizes[gesture] = {}
        for flavor, m in flavors.items():
            path = workdir / f"{gesture}-{flavor}.brnn"
            save_model(m, path)
            report.model_load[gesture][flavor], raw = bench_model_load(path, reps, warmup)
            report.sizes[gesture][flavor] = {"raw": raw, "zipped": zipped_size(m)}
            report.inference[gesture][flavor] = bench_inference(m, windows, reps, warmup)
    return report


def render_table(report: BenchReport) -> str:
    """Plain-text table: metric x gesture x model flavor."""
    lines = [f"{'metric':<22}{'gesture':<8}{'flavor':<7}{'mean ms':>10}{'std':>9}{'min':>9}{'max':>9}"]

    def row(metric, gesture, flavor, s):
        lines.append(f"{metric:<22}{gesture:<8}{flavor:<7}{s.mean_ms:>10.3f}{s.std_ms:>9.3f}"
                     f"{s.min_ms:>9.3f}{s.max_ms:>9.3f}")

    for g, s in report.feature_extraction.items():
        row("feature_extraction", g, "-", s)
    for name in ("model_load", "inference"):
        for g, per in getattr(report, name).items():
            for flavor, s in per.items():
                row(name, g, flavor, s)
    lines.append("")
    lines.append(f"{'size (bytes)':<22}{'gesture':<8}{'flavor':<7}{'raw':>10}{'zipped':>10}")
    for g, per in report.sizes.items():
        for flavor, s in per.items():
            lines.append(f"{'':<22}{g:<8}{flavor:<7}{s['raw']:>10}{s['zipped']:>10}")
    lines.append(f"machine: {report.machine}")
    return "\n".join(lines)
