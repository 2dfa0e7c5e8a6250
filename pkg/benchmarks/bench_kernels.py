"""Time the compiled and numpy kernel backends on representative workloads.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from protodistill import kernels


def workloads(rng: np.random.Generator) -> dict:
    """Sizes match one 32x32 topomap, a 2000-embedding bank and a 1000-resample bootstrap."""
    res = 32
    g = np.linspace(-1, 1, res)
    px, py = [a.ravel() for a in np.meshgrid(g, g)]
    ex, ey = rng.uniform(-0.9, 0.9, 14), rng.uniform(-0.9, 0.9, 14)
    vals = rng.normal(size=14)
    emb = rng.normal(size=(2000, 256))
    flat = rng.integers(0, 25, 2000)
    labels, preds = rng.integers(0, 8, 600), rng.integers(0, 8, 600)
    idx = rng.integers(0, 600, size=(1000, 600))
    return {
        "idw_interpolate 32x32": lambda m: m.idw_interpolate(px, py, ex, ey, vals),
        "accumulate_bins 2000x256": lambda m: m.accumulate_bins(emb, flat, 25),
        "confusion n=600": lambda m: m.confusion(labels, preds, 8),
        "resampled_confusions 1000x600": lambda m: m.resampled_confusions(labels, preds, idx, 8),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.backends()
    if "cython" not in backends:
        print("compiled backend unavailable; timing the numpy fallback only")
    rows = []
    for name, fn in workloads(np.random.default_rng(0)).items():
        times = {}
        for bname, mod in backends.items():
            t = timeit.Timer(lambda: fn(mod))
            n, _ = t.autorange()
            times[bname] = min(t.repeat(args.repeat, n)) / n
        rows.append((name, times))
    print(f"{'kernel':32s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, times in rows:
        py = times["python"]
        cy = times.get("cython")
        cy_s = f"{cy * 1e6:10.1f}us" if cy else f"{'n/a':>12s}"
        sp = f"{py / cy:7.2f}x" if cy else f"{'':>8s}"
        print(f"{name:32s} {py * 1e6:10.1f}us {cy_s} {sp}")


if __name__ == "__main__":
    main()
