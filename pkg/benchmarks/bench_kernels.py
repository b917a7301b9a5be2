"""Time the compiled lattice kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from qsphere import kernels
from qsphere.lattice import Truncation


def cases():
    t = Truncation(3, 14, 14)
    rng = np.random.default_rng(0)
    values = rng.random(t.size)
    levels = np.ascontiguousarray(t.levels(), dtype=np.int64)
    coords = np.ascontiguousarray(t.coords)
    positive = (coords[:, -1] >= 0).astype(np.uint8)
    M = np.array([2, 2, 2, 2], dtype=np.int64)
    return {
        "ball_count_enum(3, 40)": lambda mod: mod.ball_count_enum(3, 40),
        f"level_sups(n={t.size})": lambda mod: mod.level_sups(values, levels, 15),
        f"classify_regions(n={t.size})": lambda mod: mod.classify_regions(coords, positive, M),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    print(f"{'kernel':34s}" + "".join(f"{name:>14s}" for name in backends) + "   speedup")
    for label, fn in cases().items():
        times = {}
        for name, mod in backends.items():
            fn(mod)
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{label:34s}" + "".join(f"{times[n] * 1e3:12.2f}ms" for n in backends)
        if "compiled" in times:
            row += f"   {times['python'] / times['compiled']:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
