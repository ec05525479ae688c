"""Time the hot kernels under both backends.

The backend is fixed at import, so each one runs in its own interpreter:

    python3 benchmarks/bench_kernels.py            # both, side by side
    python3 benchmarks/bench_kernels.py --child    # current backend only

Numba timings exclude the first (compiling) call.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up; triggers compilation under numba
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def child(repeat):
    import rdcompress
    from rdcompress import compress, kernels, relu_oracle
    from rdcompress.importance import ImportanceDiag

    rng = np.random.default_rng(0)
    w = rng.standard_normal(20_000)
    I = rng.uniform(0.0, 2.0, w.size)
    H = rng.uniform(0.0, 1.0, w.size)
    c = np.sort(rng.standard_normal(16))
    A = kernels.assign_nearest(w, c)
    a = rng.uniform(0.1, 5.0, 5000)
    b = rng.normal(0.0, 3.0, 5000)
    cc = b * b / (3 * a) * 1.5 + 0.1
    d = rng.normal(0.0, 5.0, 5000)
    w6, lam6 = rng.standard_normal(6), rng.uniform(0.2, 2.0, 6)

    cases = {
        "assign_nearest (20k x 16)": lambda: kernels.assign_nearest(w, c),
        "objective (20k)": lambda: kernels.objective(w, I, H, A, c),
        "cubic_roots (5k)": lambda: kernels.cubic_roots(a, b, cc, d),
        "weighted_kmeans (20k, k=16)": lambda: compress.weighted_kmeans(w, I, 16, iters=20, n_init=1),
        "quartic_kmeans (20k, k=16)": lambda: compress.quartic_weighted_kmeans(w, ImportanceDiag(I, H), 16, iters=20, n_init=1),
        "relu quant verify (m=6, k=2)": lambda: relu_oracle.verify_quant_optimality(w6, lam6, 2),
    }
    out = {"backend": rdcompress.backend(), "times": {k: _best(fn, repeat) for k, fn in cases.items()}}
    print(json.dumps(out))


def run_backend(no_numba, repeat):
    env = dict(os.environ)
    env.pop("RDCOMPRESS_NO_NUMBA", None)
    if no_numba:
        env["RDCOMPRESS_NO_NUMBA"] = "1"
    res = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--child", action="store_true")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if args.child:
        child(args.repeat)
        return
    fast = run_backend(False, args.repeat)
    slow = run_backend(True, args.repeat)
    print(f"{'kernel':32s} {fast['backend']:>10s} {slow['backend']:>10s} {'speedup':>8s}")
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        print(f"{name:32s} {t_fast * 1e3:8.2f}ms {t_slow * 1e3:8.2f}ms {t_slow / t_fast:7.1f}x")


if __name__ == "__main__":
    main()
