"""Time one objective+gradient evaluation per backend.

Compares the compiled trie kernel, its numpy fallback and the dense
full-tensor path on problem sizes used by the recovery experiments.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from ttwopt import kernels
from ttwopt.evaluation import gen_mask
from ttwopt.tt import new_tt
from ttwopt.wopt import ObservedProblem, _dense_fg

CASES = [
    ("4^7, rank 20, 50% missing", (4,) * 7, 20, 0.5),
    ("30^3, rank 20, 50% missing", (30, 30, 30), 20, 0.5),
    ("4^8 x 3, rank 16, 90% missing", (4,) * 8 + (3,), 16, 0.9),
    ("4^8 x 3, rank 16, 99% missing", (4,) * 8 + (3,), 16, 0.99),
]


def best_time(fn, repeat):
    fn()  # warm caches (trie groups, BLAS)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def make_case(shape, rank, rate, seed=0):
    rng = np.random.default_rng(seed)
    ranks = (1,) + (rank,) * (len(shape) - 1) + (1,)
    cores = [0.3 * rng.standard_normal((ranks[k], d, ranks[k + 1])) for k, d in enumerate(shape)]
    p = ObservedProblem(rng.standard_normal(shape), gen_mask(shape, rate, seed))
    return p, new_tt(cores)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    have_compiled = kernels.BACKEND == "compiled"
    print(f"kernel backend at import: {kernels.BACKEND}")
    print(f"{'case':32s} {'compiled':>10s} {'python':>10s} {'dense':>10s}   (ms per f+g)")
    for title, shape, rank, rate in CASES:
        p, tt = make_case(shape, rank, rate)
        trie = p.trie
        py = best_time(lambda: kernels.python_observed_fg(tt.cores, trie), args.repeat)
        cc = best_time(lambda: kernels.compiled_observed_fg(tt.cores, trie), args.repeat) if have_compiled else None
        dn = best_time(lambda: _dense_fg(p, tt), args.repeat)
        cell = f"{1e3 * cc:10.1f}" if cc is not None else f"{'n/a':>10s}"
        print(f"{title:32s} {cell} {1e3 * py:10.1f} {1e3 * dn:10.1f}")


if __name__ == "__main__":
    main()
