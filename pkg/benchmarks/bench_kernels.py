"""Benchmark the compiled grid kernels against the numpy fallback.

Runs each kernel on representative problem sizes under both backends and
prints a timing table with speedups.  Backend selection happens at import
time, so each backend runs in its own subprocess (RSMFG_FORCE_NUMPY=1
selects the fallback).

Usage:  python benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

SIZES = {
    "upwind_gradients": [(401,), (2001,), (10001,)],
    "hjb_min_hamiltonian": [(129, 401), (129, 2001), (257, 2001)],
    "fpk_step": [(401,), (2001,), (10001,)],
}


def run_backend(repeat: int) -> dict:
    from rsmfg import kernels

    rng = np.random.default_rng(42)
    results = {"backend": kernels.BACKEND, "timings": {}}
    dx, dt = 0.05, 1e-4

    for shape in SIZES["upwind_gradients"]:
        v = rng.standard_normal(shape[0])
        t = timeit.timeit(lambda: kernels.upwind_gradients(v, dx),
                          number=repeat) / repeat
        results["timings"][f"upwind_gradients nx={shape[0]}"] = t

    for nu, nx in SIZES["hjb_min_hamiltonian"]:
        v = rng.standard_normal(nx)
        f_tab = rng.standard_normal((nu, nx))
        c_tab = rng.standard_normal((nu, nx)) ** 2
        t = timeit.timeit(
            lambda: kernels.hjb_min_hamiltonian(v, f_tab, c_tab, dx),
            number=repeat) / repeat
        results["timings"][f"hjb_min_hamiltonian nu={nu} nx={nx}"] = t

    for shape in SIZES["fpk_step"]:
        nx = shape[0]
        m = np.abs(rng.standard_normal(nx)) + 0.1
        m /= m.sum() * dx
        vel = rng.standard_normal(nx)
        diff = np.abs(rng.standard_normal(nx - 1)) + 0.5
        t = timeit.timeit(lambda: kernels.fpk_step(m, vel, diff, dx, dt),
                          number=repeat) / repeat
        results["timings"][f"fpk_step nx={nx}"] = t

    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=200,
                        help="iterations per timing (default 200)")
    parser.add_argument("--worker", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        print(json.dumps(run_backend(args.repeat)))
        return 0

    runs = {}
    for force_numpy in (False, True):
        env = dict(os.environ)
        env.pop("RSMFG_FORCE_NUMPY", None)
        if force_numpy:
            env["RSMFG_FORCE_NUMPY"] = "1"
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--repeat", str(args.repeat)],
            env=env, capture_output=True, text=True, check=True)
        data = json.loads(out.stdout.strip().splitlines()[-1])
        runs[data["backend"]] = data["timings"]

    if "cython" not in runs:
        print("compiled backend unavailable; numpy timings only")
        for case, t in runs["numpy"].items():
            print(f"{case:42s} {t * 1e6:10.1f} us")
        return 0

    print(f"{'kernel / size':42s} {'numpy':>12s} {'cython':>12s} "
          f"{'speedup':>8s}")
    for case in runs["numpy"]:
        tn, tc = runs["numpy"][case], runs["cython"][case]
        print(f"{case:42s} {tn * 1e6:10.1f} us {tc * 1e6:10.1f} us "
              f"{tn / tc:7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
