"""Time the compiled and pure-numpy kernel backends on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeats 5] [--scale 1.0] [--csv out.csv]

Each kernel is run on copies of the same input in both backends; the outputs
are compared for bit equality and the best-of-``repeats`` wall time is
reported along with the speedup of the compiled backend.
"""

import argparse
import csv
import sys
import time

import numpy as np

from sketchprecond.kernels import get_backend
from sketchprecond.sketches import generate_sparse_sign


def cases(scale, rng):
    m, n, d = int(20_000 * scale), 50, 400
    S = generate_sparse_sign(d, m, 8, seed=1).matrix
    A = np.asfortranarray(rng.standard_normal((m, n)))

    def spmm(k):
        out = np.zeros((d, n), order="F")
        k.csc_dense_accumulate(S.indptr, S.indices, S.data, A, out)
        return out

    C0 = rng.integers(0, 1000, size=(int(100_000 * scale), 8), dtype=np.int64)
    rows = np.arange(C0.shape[0], dtype=np.int64)

    def dedup(k):
        C = C0.copy()
        bi, bj = k.sort_rows_find_duplicates(C, rows)
        return np.concatenate([C.ravel(), bi, bj])

    X0 = np.asfortranarray(rng.standard_normal((4096, max(1, int(64 * scale)))))

    def fwht(k):
        X = X0.copy(order="F")
        k.fwht_columns(X)
        return X

    B = rng.standard_normal((40, 40))
    G0 = np.ascontiguousarray(B @ B.T)

    def jacobi(k):
        eig, sweeps = k.jacobi_eigenvalues(G0.copy(), 1e-15, 50)
        return np.append(eig, sweeps)

    return {"spmm": spmm, "sort_rows_find_duplicates": dedup, "fwht": fwht, "jacobi": jacobi}


def best_time(fn, k, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(k)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="problem-size multiplier")
    ap.add_argument("--csv", help="also write results to this CSV file")
    args = ap.parse_args(argv)

    py = get_backend("python")
    try:
        cy = get_backend("cython")
    except ImportError:
        print("compiled backend not built; only the python backend is available", file=sys.stderr)
        return 1

    rows = []
    for name, fn in cases(args.scale, np.random.default_rng(0)).items():
        t_py, o_py = best_time(fn, py, args.repeats)
        t_cy, o_cy = best_time(fn, cy, args.repeats)
        rows.append((name, t_py, t_cy, t_py / t_cy, bool(np.array_equal(o_py, o_cy))))

    print(f"{'kernel':<28}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}{'identical':>11}")
    for name, t_py, t_cy, sp_, same in rows:
        print(f"{name:<28}{t_py:>12.4f}{t_cy:>12.4f}{sp_:>10.1f}{str(same):>11}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "python_seconds", "cython_seconds", "speedup", "identical"])
            w.writerows(rows)
    return 0 if all(r[-1] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
