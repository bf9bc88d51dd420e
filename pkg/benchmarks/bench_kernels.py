"""Compare the compiled and numpy sweep kernels.

Times one Gauss-Seidel sweep (best of ``--repeats``) and a full canonical
shift for each backend on random rating matrices of MovieLens-like sizes.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 943x1682:100000 --repeats 20
"""

import argparse
import time

import numpy as np

from shiftrec import SparseTensor, csa, kernels
from shiftrec.canonical import default_order
from shiftrec.tensor import catalog


def parse_size(text):
    shape, nnz = text.split(":")
    return tuple(int(x) for x in shape.split("x")), int(nnz)


def random_matrix(shape, nnz, seed):
    rng = np.random.default_rng(seed)
    lin = rng.choice(int(np.prod(shape)), size=nnz, replace=False)
    idx = np.stack(np.unravel_index(lin, shape), axis=1)
    vals = np.clip(np.round(rng.normal(3.5, 1.0, size=nnz)), 1, 5)
    return SparseTensor(shape, idx, vals, one_based=False)


def time_sweep(t, backend, repeats):
    cat = catalog(t.shape, t.ndim - 1)
    sw = kernels.make_sweeper(cat.member_positions(t.index_array), cat._offsets, len(cat),
                              default_order(cat), backend=backend)
    vals, shifts = t.values.copy(), np.zeros(len(cat))
    sw.sweep(vals, shifts)  # warm-up
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        sw.sweep(vals, shifts)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=lambda s: [parse_size(x) for x in s.split(",")],
                    default=[((943, 1682), 100_000), ((6040, 3706), 1_000_209)],
                    help="comma-separated SHAPE:NNZ entries, e.g. 943x1682:100000")
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled kernel not built; timing the numpy fallback only")
    print(f"{'shape':>12} {'nnz':>9} {'backend':>9} {'sweep ms':>9} {'csa s':>7} {'sweeps':>6}")
    for shape, nnz in args.sizes:
        t = random_matrix(shape, nnz, args.seed)
        per = {}
        for b in backends:
            per[b] = time_sweep(t, b, args.repeats)
            t0 = time.perf_counter()
            res = csa(t, t.ndim - 1, backend=b)
            full = time.perf_counter() - t0
            print(f"{'x'.join(map(str, shape)):>12} {nnz:>9} {b:>9} {1e3 * per[b]:9.2f} "
                  f"{full:7.3f} {res.sweeps_used:6d}")
        if len(per) == 2:
            print(f"{'':>12} {'':>9} {'speedup':>9} {per['python'] / per['compiled']:9.2f}x")


if __name__ == "__main__":
    main()
