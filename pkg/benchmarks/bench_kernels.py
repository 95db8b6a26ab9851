"""Compiled vs numpy SU(2) kernels.

    python benchmarks/bench_kernels.py [--steps N] [--repeat R]

Times ``su2_chain`` and ``su2_track_p2`` on random rotation vectors for
every available backend and checks that the backends agree.
"""

import argparse
import timeit

import numpy as np

from cddclock.kernels import backends


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=1_000_000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    rng = np.random.default_rng(0)
    v = tuple(rng.normal(scale=0.05, size=args.steps) for _ in range(3))
    psi0 = np.array([1.0, 0.0], dtype=complex)
    mods = backends()
    results = {}
    print(f"{'backend':10s} {'kernel':14s} {'best s':>9s} {'ns/step':>9s}")
    for name, mod in sorted(mods.items()):
        for kernel, call in (("su2_chain", lambda: mod.su2_chain(*v)),
                             ("su2_track_p2", lambda: mod.su2_track_p2(*v, psi0, 2))):
            best = min(timeit.repeat(call, number=1, repeat=args.repeat))
            results[(name, kernel)] = (best, call())
            print(f"{name:10s} {kernel:14s} {best:9.4f} {1e9 * best / args.steps:9.1f}")
    if "compiled" in mods:
        for kernel in ("su2_chain", "su2_track_p2"):
            tc, rc = results[("compiled", kernel)]
            tp, rp = results[("python", kernel)]
            a = rc if kernel == "su2_chain" else rc[0]
            b = rp if kernel == "su2_chain" else rp[0]
            print(f"{kernel}: speedup {tp / tc:.1f}x, max deviation {np.max(np.abs(a - b)):.1e}")
    else:
        print("compiled extension not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
