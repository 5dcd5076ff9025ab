"""Compare the compiled and pure-Python kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

Times single-sample inference (the latency the pruning sweep reports),
batch inference and weighted subset draws, then prints one row per
(kernel, backend) with the speed-up of the compiled backend.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from ids_adapt import kernels
from ids_adapt.mlp import init_mlp


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n_features: int, batch: int):
    model = init_mlp([n_features, 64, 64, 64, 64, 1], 0)
    rng = np.random.default_rng(0)
    X = rng.random((batch, n_features))
    rows = [np.ascontiguousarray(X[i : i + 1]) for i in range(200)]
    probs = rng.random(n_features)
    probs /= probs.sum()
    uniforms = rng.random((1000, max(1, n_features // 2)))
    W, B = model.weights, model.biases

    def single(mod):
        return lambda: [mod.dense_forward(r, W, B) for r in rows]

    def batched(mod):
        return lambda: mod.dense_forward(X, W, B)

    def draws(mod):
        return lambda: mod.weighted_draws(probs, uniforms.shape[1], uniforms)

    return [
        ("forward_single_x200", single, len(rows)),
        (f"forward_batch_{batch}", batched, batch),
        (f"weighted_draws_1000x{uniforms.shape[1]}", draws, 1000),
    ]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--features", type=int, default=78)
    p.add_argument("--batch", type=int, default=4096)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--csv", help="also write results to this CSV")
    args = p.parse_args(argv)

    backends = {name: kernels.load_backend(name) for name in kernels.available_backends()}
    if "compiled" not in backends:
        print("compiled extension not built; timing the python backend only", file=sys.stderr)
    rows = []
    for name, make, units in cases(args.features, args.batch):
        times = {b: _best_of(make(mod), args.repeat) for b, mod in backends.items()}
        for b, t in times.items():
            speedup = times["python"] / t if "python" in times else float("nan")
            rows.append([name, b, f"{t * 1e3:.3f}", f"{t * 1e9 / units:.0f}", f"{speedup:.2f}"])

    header = ["kernel", "backend", "best_ms", "ns_per_unit", "speedup_vs_python"]
    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
    for r in [header] + rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
