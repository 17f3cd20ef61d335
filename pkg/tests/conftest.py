import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from breathauth.augment import AugmentConfig  # noqa: E402
from breathauth.dataset import make_splits, synth_manifest  # noqa: E402
from breathauth.features import WindowConfig  # noqa: E402
from breathauth.lstm import init_model  # noqa: E402
from breathauth.selection import build_candidates, select_best  # noqa: E402
from breathauth.training import TrainConfig, train  # noqa: E402

ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_splits():
    """3 users x 14 sniff clips: seconds to build, enough for wiring tests."""
    manifest = synth_manifest(3, 14, seed=11, gestures=("sniff",))
    return make_splits(manifest, WindowConfig(30, 0.9), AugmentConfig(copies_per_sample=2, seed=5), split_seed=6)


@pytest.fixture(scope="session")
def synthetic_run():
    """The desk-scale experiment: 5 users x 40 sniff clips, W=30 at 90% overlap, 500 iterations."""
    manifest = synth_manifest(5, 40, seed=7, gestures=("sniff",))
    splits = make_splits(manifest, WindowConfig(30, 0.9), AugmentConfig(seed=1), split_seed=2)
    result = train(init_model(splits.num_users, 30, seed=3), splits, TrainConfig(max_iterations=500, seed=4))
    candidates = build_candidates(result.history.validation_acc, result.checkpoints)
    model, report = select_best(candidates, splits, history=result.history)
    return {"manifest": manifest, "splits": splits, "result": result, "model": model, "report": report}
