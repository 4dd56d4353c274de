"""Time the numba kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--n 4096] [--repeat 20]

Prints one line per kernel with the best-of-``repeat`` time for each backend
and the speed-up. A final line times a short end-to-end run in a subprocess
per backend, since the backend is fixed at import time.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from viscowave import _kernels

RUN_SNIPPET = """
import time
from viscowave import Grid, KernelSpec, InitialHistory, ModelParams, StepControl, run
g = Grid.interval({n})
args = (InitialHistory(4.0 * g.sine_mode()), ModelParams(3.0, 2.0),
        KernelSpec(((1.0, 1.0), (0.5, 0.2))), StepControl(), g)
run(*args, 0.002)  # compile and warm caches
t0 = time.perf_counter()
run(*args, {horizon})
print(time.perf_counter() - t0)
"""


def _cases(n):
    rng = np.random.default_rng(0)
    f1 = rng.standard_normal(n)
    side = int(np.sqrt(n))
    f2 = rng.standard_normal((side, side))
    z = rng.standard_normal((4, n))
    inv1, inv2 = np.array([1e4]), np.array([1e4, 2e4])
    decay, gain = np.linspace(0.5, 0.9, 4), np.linspace(0.1, 0.4, 4)
    return {
        "laplacian 1d": ("laplacian", (f1, inv1)),
        "laplacian 2d": ("laplacian", (f2, inv2)),
        "grad_dot 1d": ("grad_dot", (f1, f1, inv1)),
        "grad_dot 2d": ("grad_dot", (f2, f2, inv2)),
        "damping m=2": ("damping_solve", (10 * f1, 5e-4, 2.0)),
        "damping m=3.5": ("damping_solve", (10 * f1, 5e-4, 3.5)),
        "prony update": ("prony_update", (z, f1, decay, gain)),
        "abs power q=4": ("abs_power_sum", (f1, 4.0)),
        "abs power q=3.5": ("abs_power_sum", (f1, 3.5)),
    }


def bench_kernels(n, repeat):
    if "numba" not in _kernels.BACKENDS:
        print("numba not importable; nothing to compare")
        return
    print(f"{'kernel':<18}{'numpy [us]':>12}{'numba [us]':>12}{'speed-up':>10}")
    for label, (name, args) in _cases(n).items():
        times = {}
        for backend in ("numpy", "numba"):
            fn = _kernels.BACKENDS[backend][name]
            fn(*args)  # compile
            number = 50
            best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat))
            times[backend] = best / number * 1e6
        print(f"{label:<18}{times['numpy']:>12.1f}{times['numba']:>12.1f}"
              f"{times['numpy'] / times['numba']:>10.1f}")


def bench_run(n, horizon):
    out = {}
    for backend in ("numpy", "numba"):
        proc = subprocess.run([sys.executable, "-c", RUN_SNIPPET.format(n=n, horizon=horizon)],
                              env=dict(os.environ, VISCOWAVE_BACKEND=backend),
                              capture_output=True, text=True, check=True)
        out[backend] = float(proc.stdout.strip())
    print(f"run n={n} t<={horizon}: numpy {out['numpy']:.2f} s, numba {out['numba']:.2f} s, "
          f"speed-up {out['numpy'] / out['numba']:.1f}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4096, help="nodes per field")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--run-n", type=int, default=255)
    ap.add_argument("--horizon", type=float, default=0.5)
    args = ap.parse_args(argv)
    bench_kernels(args.n, args.repeat)
    bench_run(args.run_n, args.horizon)


if __name__ == "__main__":
    main()
