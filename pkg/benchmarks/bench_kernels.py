"""Time the numpy and numba kernel implementations on the same inputs.

    python3 benchmarks/bench_kernels.py [--windows N] [--repeat R] [--json out.json]

Each kernel is checked for identical output across backends before timing.
The numba time excludes JIT compilation (one warm-up call).
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from spoofwatch import _kernels


def make_inputs(n_windows: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    counts = rng.integers(5, 16, n_windows)
    offsets = np.zeros(n_windows + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    values = rng.uniform(5, 120, int(offsets[-1])) + rng.laplace(0, 2, int(offsets[-1]))
    log_ts = np.sort(rng.integers(0, 3600 * 24, n_windows * 10))
    query_ts = rng.integers(0, 3600 * 24, n_windows * 15)
    cols = [rng.uniform(5, 120, n_windows), rng.uniform(5, 120, n_windows), rng.uniform(0, 5, n_windows), rng.uniform(0, 5, n_windows)]
    return {
        "segment_median_mad": (values, offsets),
        "match_within": (query_ts, log_ts, 240),
        "covert_mask": (*cols, 0.2, 3.0, 10.0),
    }


def best_of(fn, args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b, equal_nan=True)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--windows", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()

    inputs = make_inputs(args.windows)
    backends = sorted(_kernels.IMPLEMENTATIONS)
    if "numba" not in backends:
        print("numba not available (or disabled); timing numpy only")
    results = []
    for name, kargs in inputs.items():
        ref = _kernels.IMPLEMENTATIONS["numpy"][name](*kargs)
        row = {"kernel": name}
        for backend in backends:
            fn = _kernels.IMPLEMENTATIONS[backend][name]
            out = fn(*kargs)  # warm-up, compiles under numba
            if not same(out, ref):
                raise SystemExit(f"{name}: {backend} disagrees with numpy")
            row[backend] = best_of(fn, kargs, args.repeat)
        if "numba" in row:
            row["speedup"] = row["numpy"] / row["numba"]
        results.append(row)

    print(f"{'kernel':<20}" + "".join(f"{b + ' s':>12}" for b in backends) + ("   speedup" if "numba" in backends else ""))
    for row in results:
        line = f"{row['kernel']:<20}" + "".join(f"{row[b]:>12.4f}" for b in backends)
        if "speedup" in row:
            line += f"{row['speedup']:>9.1f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"windows": args.windows, "results": results}, fh, indent=2)


if __name__ == "__main__":
    main()
