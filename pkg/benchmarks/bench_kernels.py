"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--reps 50] [--json out.json]

Each kernel runs on identical inputs under both backends; the numba side
is compiled (and checked for agreement) before timing starts. A final
row times a whole batched LSTM forward pass in a subprocess per backend,
selected through the BREATHAUTH_KERNELS environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from breathauth._kernels import _numba, _numpy

H = 128


def _time(fn, args, reps):
    fn(*args)
    out = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn(*args)
        out.append((time.perf_counter_ns() - t0) / 1e6)
    return float(np.median(out))


def _cases(rng):
    for B in (1, 32, 1024):
        z = rng.normal(size=(B, 4 * H))
        c = rng.normal(size=(B, H))
        yield f"gates_forward B={B}", "lstm_gates_forward", (z, c)
        act, c_new, tanh_c, _ = _numpy.lstm_gates_forward(z, c)
        dh = rng.normal(size=(B, H))
        yield f"gates_backward B={B}", "lstm_gates_backward", (dh, dh.copy(), act, c, tanh_c)
    for n, d in ((200, 2880), (2000, 2880)):
        X = rng.normal(size=(n, d))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        order = rng.permutation(n)
        yield f"pegasos_pass n={n} d={d}", "pegasos_pass", (X, y, order, np.zeros(d + 1), 1e-3, 0)
    for n in (500, 50_000):
        s = np.cumsum(rng.random(n)) / n
        yield f"elbow_scan n={n}", "elbow_scan", (s, 0.05, True)


def _copy_args(args):
    return tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)


_FORWARD_SNIPPET = """
import time, numpy as np
from breathauth.lstm import init_model, predict_proba
m = init_model(5, 30, seed=0)
X = np.random.default_rng(0).normal(size=(1024, 30, 96))
predict_proba(m, X[:8])
t = []
for _ in range({reps}):
    t0 = time.perf_counter_ns(); predict_proba(m, X); t.append((time.perf_counter_ns() - t0) / 1e6)
print(float(np.median(t)))
"""


def _forward_ms(backend, reps):
    env = dict(os.environ, BREATHAUTH_KERNELS=backend)
    out = subprocess.run([sys.executable, "-c", _FORWARD_SNIPPET.format(reps=reps)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    rows = []
    for label, name, inputs in _cases(rng):
        a = getattr(_numpy, name)(*_copy_args(inputs))
        b = getattr(_numba, name)(*_copy_args(inputs))
        for u, v in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_allclose(u, v, rtol=1e-9, atol=1e-12)
        reps = max(3, args.reps // 10) if "pegasos" in label else args.reps
        t_np = _time(getattr(_numpy, name), _copy_args(inputs), reps)
        t_nb = _time(getattr(_numba, name), _copy_args(inputs), reps)
        rows.append({"case": label, "numpy_ms": t_np, "numba_ms": t_nb, "speedup": t_np / t_nb})

    fwd_reps = max(3, args.reps // 10)
    t_np = _forward_ms("numpy", fwd_reps)
    t_nb = _forward_ms("numba", fwd_reps)
    rows.append({"case": "predict_proba 1024x30x96", "numpy_ms": t_np, "numba_ms": t_nb, "speedup": t_np / t_nb})

    print(f"{'case':<32}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for r in rows:
        print(f"{r['case']:<32}{r['numpy_ms']:>12.4f}{r['numba_ms']:>12.4f}{r['speedup']:>9.2f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
