"""Command-line entry point: ``breathauth <subcommand> [flags]``.

Exit codes: 0 on success, 1 on a usage error, 2 on a runtime error. Every
subcommand that writes files also writes ``run_manifest.json`` into its
output directory, recording every input needed to regenerate the outputs.
Randomness is driven only by ``--seed``; sub-seeds are derived from it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import Gesture, write_wav
from .augment import AugmentConfig
from .bench import DEFAULT_REPS, DEFAULT_WARMUP, render_table, run_bench
from .dataset import Manifest, ManifestEntry, make_splits, synth_manifest
from .errors import BreathAuthError, UsageError
from .features import OVERLAPS, WindowConfig, dump_features, extract_features
from .lstm import LossKind, LstmModel, init_model
from .model_store import (dumps_model, load_model, load_svm, save_model, save_svm, write_json,
                          zipped_size)
from .quantize import QuantizedModel, agreement, quantize_model, quantized_predict_proba
from .selection import build_candidates, moving_average, sample_accuracy, select_best
from .svm import C_GRID, svm_sample_accuracy, svm_train, svm_train_select
from .training import MetricHistory, TrainConfig, train

log = logging.getLogger("breathauth")

RUN_MANIFEST = "run_manifest.json"
DEFAULT_WINDOW = {Gesture.SNIFF: 30, Gesture.DEEP: 250}
DEFAULT_OVERLAP = 0.9
SEED_TAGS = ("split", "augment", "init", "batch", "svm")


def derive_seeds(seed: int) -> dict:
    """Independent 32-bit sub-seeds, one per source of randomness."""
    return {tag: int(np.random.SeedSequence([seed, k]).generate_state(1)[0]) for k, tag in enumerate(SEED_TAGS)}


@dataclass
class RunManifest:
    command: str
    out: str
    seed: int | None = None
    seeds: dict = field(default_factory=dict)
    manifest: str | None = None
    gesture: str | None = None
    window: dict | None = None
    augment: dict | None = None
    train: dict | None = None
    options: dict = field(default_factory=dict)
    version: str = __version__

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, run_dir) -> "RunManifest":
        path = Path(run_dir) / RUN_MANIFEST
        try:
            return cls(**json.loads(path.read_text()))
        except (OSError, TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read run manifest {path}: {exc}") from exc

    def save(self, out_dir) -> None:
        write_json(self.to_json(), Path(out_dir) / RUN_MANIFEST)


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _overlap(text: str) -> float:
    v = float(text)
    if v not in OVERLAPS:
        raise argparse.ArgumentTypeError(f"overlap must be one of {sorted(OVERLAPS)}")
    return v


def _add_data_flags(p, seed=True):
    p.add_argument("--manifest", required=True, help="dataset manifest (JSON lines)")
    p.add_argument("--gesture", required=True, choices=[g.value for g in Gesture])
    p.add_argument("--window", type=_pos_int, help="window length in frames (default 30 sniff, 250 deep)")
    p.add_argument("--overlap", type=_overlap, default=DEFAULT_OVERLAP)
    p.add_argument("--copies", type=int, default=10, help="augmented copies per training clip")
    p.add_argument("--intra-count", type=int, help="held-out session-2 clips per user")
    p.add_argument("--strict", action="store_true", help="require the 30/30/10 session layout")
    if seed:
        p.add_argument("--seed", type=_u64, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="breathauth", description="Breathing-gesture user identification pipeline.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic WAV dataset and its manifest")
    p.add_argument("--users", type=_pos_int, default=5)
    p.add_argument("--clips", type=_pos_int, default=40, help="clips per user and gesture")
    p.add_argument("--gestures", default="sniff,deep")
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("features", help="extract per-clip feature matrices")
    p.add_argument("--manifest", required=True)
    p.add_argument("--gesture", required=True, choices=[g.value for g in Gesture])
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the LSTM and keep the elbow candidates")
    _add_data_flags(p)
    p.add_argument("--iterations", type=_pos_int, default=500)
    p.add_argument("--batch", type=_pos_int, default=32)
    p.add_argument("--loss", choices=[k.value for k in LossKind], default=LossKind.CROSS_ENTROPY.value)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", required=True)

    p = sub.add_parser("select", help="pick the best elbow candidate of a training run")
    p.add_argument("--run", required=True, help="output directory of `train`")
    p.add_argument("--out", required=True)

    p = sub.add_parser("quantize", help="8-bit quantize a float model file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="sample-level accuracy of a model file on a run's splits")
    p.add_argument("--run", required=True, help="output directory of `train`")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("svm-train", help="train the one-vs-one linear SVM baseline")
    _add_data_flags(p)
    p.add_argument("--C", type=float, help="fixed C (default: pick from the grid on validation)")
    p.add_argument("--epochs", type=_pos_int, default=20)
    p.add_argument("--out", required=True)

    p = sub.add_parser("svm-eval", help="sample-level accuracy of an SVM file on a run's splits")
    p.add_argument("--run", required=True, help="output directory of `svm-train` or `train`")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="latency and size benchmark")
    p.add_argument("--manifest", required=True, help="clips used for extraction and inference timing")
    p.add_argument("--sniff-model")
    p.add_argument("--deep-model")
    p.add_argument("--overlap", type=_overlap, default=DEFAULT_OVERLAP)
    p.add_argument("--clips", type=_pos_int, default=4, help="clips per gesture to time")
    p.add_argument("--reps", type=int, default=DEFAULT_REPS)
    p.add_argument("--warmup", type=int, default=DEFAULT_WARMUP)
    p.add_argument("--no-pin", action="store_true", help="do not pin to a single core")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="emit accuracy-curve and latency data tables")
    p.add_argument("--train-run", action="append", default=[], help="output directory of `train` (repeatable)")
    p.add_argument("--bench", help="bench.json from `bench`")
    p.add_argument("--out", required=True)
    return parser


# --------------------------------------------------------------------------
# helpers


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _window_config(args) -> WindowConfig:
    g = Gesture.parse(args.gesture)
    return WindowConfig(args.window or DEFAULT_WINDOW[g], args.overlap)


def _data_manifest_fields(args, seeds) -> dict:
    wc = _window_config(args)
    return dict(
        seed=args.seed,
        seeds=seeds,
        manifest=str(args.manifest),
        gesture=args.gesture,
        window={"window_len_frames": wc.window_len_frames, "overlap_fraction": wc.overlap_fraction},
        augment=asdict(AugmentConfig(copies_per_sample=args.copies, seed=seeds["augment"])),
        options={"intra_count": args.intra_count, "strict": args.strict},
    )


def _splits_from(rm: RunManifest):
    if rm.manifest is None or rm.window is None or rm.augment is None:
        raise UsageError(f"run manifest of `{rm.command}` does not describe a dataset split")
    return make_splits(
        Manifest.load(rm.manifest),
        WindowConfig(**rm.window),
        AugmentConfig(**rm.augment),
        rm.seeds["split"],
        gesture=rm.gesture,
        strict=rm.options.get("strict", False),
        intra_count=rm.options.get("intra_count"),
    )


def _checkpoint_name(iteration: int) -> str:
    return f"iter-{iteration:05d}.brnn"


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    out = _out_dir(args.out)
    gestures = [Gesture.parse(g.strip()) for g in args.gestures.split(",") if g.strip()]
    if not gestures:
        raise UsageError("--gestures is empty")
    synth = synth_manifest(args.users, args.clips, args.seed, gestures)
    entries = []
    for e in synth.entries:
        rel = Path("wav") / f"u{e.user}" / e.gesture.value / f"s{e.session}-{e.index:03d}.wav"
        (out / rel).parent.mkdir(parents=True, exist_ok=True)
        write_wav(synth.load_clip(e), out / rel)
        entries.append(ManifestEntry(e.user, e.gesture, e.session, e.index, path=rel.as_posix()))
    Manifest(entries).save(out / "manifest.jsonl")
    RunManifest("synth", str(args.out), seed=args.seed,
                options={"users": args.users, "clips": args.clips,
                         "gestures": [g.value for g in gestures]}).save(out)
    print(f"wrote {len(entries)} clips to {out / 'manifest.jsonl'}")
    return 0


def cmd_features(args) -> int:
    out = _out_dir(args.out)
    manifest = Manifest.load(args.manifest)
    g = Gesture.parse(args.gesture)
    index = []
    for e in manifest.entries:
        if e.gesture is not g:
            continue
        frames = extract_features(manifest.load_clip(e))
        dump_features(frames, out / f"{e.clip_id}.bfea")
        index.append({"clip_id": e.clip_id, "user": e.user, "session": e.session, "frames": int(frames.shape[0])})
    write_json({"clips": index}, out / "features.json")
    RunManifest("features", str(args.out), manifest=str(args.manifest), gesture=g.value).save(out)
    print(f"wrote features for {len(index)} clips")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args.out)
    seeds = derive_seeds(args.seed)
    config = TrainConfig(batch_size=args.batch, max_iterations=args.iterations, learning_rate=args.lr,
                         loss=LossKind(args.loss), seed=seeds["batch"])
    rm = RunManifest("train", str(args.out), **_data_manifest_fields(args, seeds),
                     train={k: (v.value if isinstance(v, LossKind) else v) for k, v in asdict(config).items()})
    splits = _splits_from(rm)
    model = init_model(splits.num_users, splits.window_config.window_len_frames, seeds["init"])
    result = train(model, splits, config)

    ckdir = _out_dir(out / "checkpoints")
    for old in ckdir.glob("iter-*.brnn"):
        old.unlink()
    for it, m in sorted(result.checkpoints.items()):
        save_model(m.rounded_to_float32(), ckdir / _checkpoint_name(it))
    save_model(result.model.rounded_to_float32(), out / "final.brnn")
    write_json(result.history.to_json(), out / "history.json")
    write_json({"user_ids": list(splits.user_ids),
                "windows": {"train": len(splits.train), "validation": len(splits.validation),
                            "intra": len(splits.intra), "inter": len(splits.inter)},
                "skipped_clips": {"intra": list(splits.intra.skipped_clips),
                                  "inter": list(splits.inter.skipped_clips)}},
               out / "splits.json")
    rm.save(out)
    h = result.history
    print(f"trained {len(h)} iterations; final validation {h.validation_acc[-1]:.3f}, "
          f"kept {len(result.checkpoints)} checkpoints")
    return 0


def cmd_select(args) -> int:
    run = Path(args.run)
    rm = RunManifest.load(run)
    if rm.command != "train":
        raise UsageError(f"--run must point at a `train` output, got `{rm.command}`")
    out = _out_dir(args.out)
    history = MetricHistory.from_json(json.loads((run / "history.json").read_text()))
    checkpoints = {int(p.stem.split("-")[1]): load_model(p) for p in sorted((run / "checkpoints").glob("iter-*.brnn"))}
    cands = build_candidates(history.validation_acc, checkpoints)
    best, report = select_best(cands, _splits_from(rm), history=history)
    save_model(best, out / "model.brnn")
    write_json(report.to_json(), out / "selection.json")
    RunManifest("select", str(args.out), options={"run": str(args.run)}).save(out)
    chosen = next(r for r in report.candidates if r["iteration"] == report.chosen_iteration)
    print(f"elbow {report.elbow_index}; chosen iteration {report.chosen_iteration} "
          f"(validation {chosen['validation']:.3f}, intra {chosen['intra']:.3f}, inter {chosen['inter']:.3f})")
    return 0


def cmd_quantize(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, LstmModel):
        raise UsageError("--model must be a float model file")
    out = _out_dir(args.out)
    q = quantize_model(model)
    q_raw = save_model(q, out / "model.q.brnn")
    sizes = {
        "float": {"raw": len(dumps_model(model)), "zipped": zipped_size(model)},
        "quant": {"raw": q_raw, "zipped": zipped_size(q)},
    }
    sizes["ratio_raw"] = sizes["quant"]["raw"] / sizes["float"]["raw"]
    sizes["ratio_zipped_float_to_quant"] = sizes["float"]["raw"] / sizes["quant"]["zipped"]
    write_json(sizes, out / "sizes.json")
    RunManifest("quantize", str(args.out), options={"model": str(args.model)}).save(out)
    print(f"float {sizes['float']['raw']} B, quantized {q_raw} B (ratio {sizes['ratio_raw']:.4f})")
    return 0


def cmd_eval(args) -> int:
    rm = RunManifest.load(args.run)
    splits = _splits_from(rm)
    model = load_model(args.model)
    out = _out_dir(args.out)
    if isinstance(model, QuantizedModel):
        accs = {k: sample_accuracy(model, ws, proba=quantized_predict_proba) for k, ws in
                splits.evaluation_sets.items()}
        flavor = "quant"
        extra = {}
    else:
        accs = {k: sample_accuracy(model, ws) for k, ws in splits.evaluation_sets.items()}
        flavor = "float"
        X = np.concatenate([ws.stack() for ws in splits.evaluation_sets.values()])
        extra = {"quantized_agreement": agreement(model, quantize_model(model), X).to_json()}
    result = {"flavor": flavor, "accuracy": {k: v.to_json() for k, v in accs.items()}, **extra}
    write_json(result, out / "eval.json")
    RunManifest("eval", str(args.out), options={"run": str(args.run), "model": str(args.model)}).save(out)
    print(" ".join(f"{k} {v.accuracy:.3f}" for k, v in accs.items()))
    return 0


def cmd_svm_train(args) -> int:
    out = _out_dir(args.out)
    seeds = derive_seeds(args.seed)
    rm = RunManifest("svm-train", str(args.out), **_data_manifest_fields(args, seeds))
    rm.options.update({"C": args.C, "epochs": args.epochs})
    splits = _splits_from(rm)
    if args.C is None:
        model, C, scores = svm_train_select(splits, C_GRID, args.epochs, seeds["svm"])
    else:
        model = svm_train(splits.train.stack(), splits.train.labels, C=args.C, epochs=args.epochs,
                          seed=seeds["svm"], num_users=splits.num_users)
        C = args.C
        scores = {float(C): svm_sample_accuracy(model, splits.validation).accuracy}
    nbytes = save_svm(model, out / "svm.bsvm")
    write_json({"C": C, "validation_by_C": {str(k): v for k, v in scores.items()},
                "classifiers": model.num_classifiers, "file_bytes": nbytes}, out / "svm_train.json")
    rm.save(out)
    print(f"C={C}: {model.num_classifiers} classifiers, {nbytes} bytes")
    return 0


def cmd_svm_eval(args) -> int:
    rm = RunManifest.load(args.run)
    splits = _splits_from(rm)
    model = load_svm(args.model)
    out = _out_dir(args.out)
    accs = {k: svm_sample_accuracy(model, ws) for k, ws in splits.evaluation_sets.items()}
    write_json({"accuracy": {k: v.to_json() for k, v in accs.items()}}, out / "svm_eval.json")
    RunManifest("svm-eval", str(args.out), options={"run": str(args.run), "model": str(args.model)}).save(out)
    print(" ".join(f"{k} {v.accuracy:.3f}" for k, v in accs.items()))
    return 0


def cmd_bench(args) -> int:
    paths = {g: p for g, p in ((Gesture.SNIFF, args.sniff_model), (Gesture.DEEP, args.deep_model)) if p}
    if not paths:
        raise UsageError("bench needs --sniff-model and/or --deep-model")
    manifest = Manifest.load(args.manifest)
    models, clips, configs = {}, {}, {}
    for g, path in paths.items():
        m = load_model(path)
        if isinstance(m, QuantizedModel):
            m = m.dequantized()
        models[g.value] = m
        configs[g.value] = WindowConfig(m.window_len, args.overlap)
        entries = [e for e in manifest.entries if e.gesture is g][: args.clips]
        if not entries:
            raise UsageError(f"manifest has no {g.value} clips")
        clips[g.value] = [manifest.load_clip(e) for e in entries]
    out = _out_dir(args.out)
    report = run_bench(models, clips, configs, out / "models", args.reps, args.warmup, pin=not args.no_pin)
    write_json(report.to_json(), out / "bench.json")
    (out / "bench.txt").write_text(render_table(report) + "\n")
    RunManifest("bench", str(args.out), manifest=str(args.manifest),
                options={k: getattr(args, k) for k in ("sniff_model", "deep_model", "overlap", "clips", "reps",
                                                       "warmup", "no_pin")}).save(out)
    print(render_table(report))
    return 0


def _curve_table(run_dir: Path) -> str:
    h = MetricHistory.from_json(json.loads((run_dir / "history.json").read_text()))
    smoothed = moving_average(h.validation_acc)
    rows = ["iteration\tvalidation\tvalidation_smoothed\tintra\tinter\tloss"]
    for i in range(len(h)):
        rows.append(f"{i}\t{h.validation_acc[i]:.6f}\t{smoothed[i]:.6f}\t{h.intra_acc[i]:.6f}\t"
                    f"{h.inter_acc[i]:.6f}\t{h.loss[i]:.6f}")
    return "\n".join(rows) + "\n"


def _latency_table(bench: dict) -> str:
    rows = ["metric\tgesture\tflavor\tmean_ms\tstd_ms\tmin_ms\tmax_ms"]
    for g, s in sorted(bench["feature_extraction"].items()):
        rows.append(f"feature_extraction\t{g}\t-\t{s['mean_ms']:.4f}\t{s['std_ms']:.4f}\t{s['min_ms']:.4f}\t"
                    f"{s['max_ms']:.4f}")
    for metric in ("model_load", "inference"):
        for g, per in sorted(bench[metric].items()):
            for flavor, s in sorted(per.items()):
                rows.append(f"{metric}\t{g}\t{flavor}\t{s['mean_ms']:.4f}\t{s['std_ms']:.4f}\t{s['min_ms']:.4f}\t"
                            f"{s['max_ms']:.4f}")
    for g, per in sorted(bench["sizes"].items()):
        for flavor, s in sorted(per.items()):
            rows.append(f"size_bytes\t{g}\t{flavor}\t{s['raw']}\t-\t-\t-")
            rows.append(f"size_zipped_bytes\t{g}\t{flavor}\t{s['zipped']}\t-\t-\t-")
    return "\n".join(rows) + "\n"


def cmd_report(args) -> int:
    if not args.train_run and not args.bench:
        raise UsageError("report needs --train-run and/or --bench")
    out = _out_dir(args.out)
    written = []
    for k, run in enumerate(args.train_run):
        rm = RunManifest.load(run)
        name = f"accuracy_curve_{k}_{rm.gesture}.tsv"
        (out / name).write_text(_curve_table(Path(run)))
        written.append(name)
    if args.bench:
        (out / "latency.tsv").write_text(_latency_table(json.loads(Path(args.bench).read_text())))
        written.append("latency.tsv")
    RunManifest("report", str(args.out), options={"train_runs": list(args.train_run), "bench": args.bench}).save(out)
    print("\n".join(written))
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "train": cmd_train,
    "select": cmd_select,
    "quantize": cmd_quantize,
    "eval": cmd_eval,
    "svm-train": cmd_svm_train,
    "svm-eval": cmd_svm_eval,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"breathauth {args.command}: {exc}", file=sys.stderr)
        return 1
    except (BreathAuthError, OSError, ValueError, KeyError) as exc:
        print(f"breathauth {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
