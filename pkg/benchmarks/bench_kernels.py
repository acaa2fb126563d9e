"""Time the compiled auction kernel against the numpy fallback.

    python benchmarks/bench_kernels.py [--draws 200000] [--bidders 8] [--repeat 5]

Both kernels receive the same draws; the script checks that their per-auction
metrics agree before reporting timings.
"""
import argparse
import timeit

import numpy as np

from adtradeoffs import kernels
from adtradeoffs._kernel_py import simulate_linear as numpy_kernel


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=200_000)
    ap.add_argument("--bidders", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.BACKEND != "cython":
        print("compiled kernel not built; only the numpy fallback is available")
        return 1
    from adtradeoffs._kernel import simulate_linear as compiled_kernel

    rng = np.random.default_rng(args.seed)
    n = args.bidders
    t = rng.uniform(0, 1, (args.draws, n))
    w = rng.uniform(0.1, 1, (args.draws, n))
    a, c = np.ones(n), np.full(n, 0.1)
    r = np.full(n, 0.1)
    slots = np.array([1.0, 0.6, 0.36])

    print(f"{args.draws} auctions, {n} bidders, {slots.size} slots, best of {args.repeat}")
    print(f"{'mode':<16}{'numpy s':>10}{'cython s':>10}{'speedup':>9}")
    for label, mode in (("truthful", kernels.TRUTHFUL), ("lowest-sne-gsp", kernels.LOWEST_SNE_GSP)):
        ref = numpy_kernel(t, w, a, c, r, 0.05, slots, mode)
        got = compiled_kernel(t, w, a, c, r, 0.05, slots, mode)
        if not np.allclose(ref, got, rtol=1e-12, atol=1e-12):
            raise SystemExit(f"kernels disagree in mode {label}")
        times = {}
        for name, fn in (("numpy", numpy_kernel), ("cython", compiled_kernel)):
            times[name] = min(timeit.repeat(lambda: fn(t, w, a, c, r, 0.05, slots, mode),
                                            number=1, repeat=args.repeat))
        print(f"{label:<16}{times['numpy']:>10.4f}{times['cython']:>10.4f}"
              f"{times['numpy'] / times['cython']:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
