"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--sizes 256 4096 65536] [--steps 50]
"""
import argparse
import timeit

import numpy as np

from condwco import kernels


def workload(n, rng):
    weights = rng.uniform(0.1, 2.0, n)
    labels = np.ascontiguousarray(np.arange(n) // 2, dtype=np.intp)
    image = np.ascontiguousarray(np.minimum(np.arange(n) + 3, n - 1), dtype=np.intp)
    u = rng.uniform(-2.0, 2.0, n)
    return u, image, weights, labels, int(labels.max()) + 1


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 4096, 65536])
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--columns", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    names = sorted(kernels.BACKENDS)
    print(f"backends: {', '.join(names)} (active: {kernels.NAME})")
    print(f"{'kernel':<14}{'atoms':>8}" + "".join(f"{b + ' ms':>14}" for b in names) + f"{'speedup':>10}")
    for n in args.sizes:
        u, image, w, lab, nb = workload(n, rng)
        F = np.ascontiguousarray(rng.normal(size=(n, args.columns)))
        e = rng.uniform(0.5, 1.5, n)
        jobs = {
            "iterate_T": lambda m: m.iterate_T(u, image, w, lab, nb, F, args.steps),
            "orbit_norms": lambda m: m.orbit_norms(u, image, w, lab, nb, F, args.steps, 2.0),
            "cocycle": lambda m: m.cocycle(e, image, args.steps),
            "block_average": lambda m: m.block_average(F, w, lab, nb),
        }
        for name, job in jobs.items():
            times = {}
            for b in names:
                mod = kernels.BACKENDS[b]
                times[b] = min(timeit.repeat(lambda: job(mod), number=1, repeat=args.repeat)) * 1e3
            speed = times["numpy"] / times[names[0]] if len(names) > 1 else 1.0
            print(f"{name:<14}{n:>8}" + "".join(f"{times[b]:>14.3f}" for b in names) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
