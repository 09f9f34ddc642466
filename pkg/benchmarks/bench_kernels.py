#!/usr/bin/env python3
"""Benchmark the hot kernels on both backends.

Runs each kernel under the compiled (numba) backend and the pure-NumPy
fallback (READ_DRO_NO_NUMBA=1), then prints a side-by-side table.  Each
backend executes in a subprocess because the backend is chosen at import
time.

Usage:  python3 benchmarks/bench_kernels.py
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

CASES = [
    ("enet_cd (M=50)", "enet"),
    ("phi_kappa_subgrad (d=50, M=10)", "phi"),
    ("read_subgrad_descent (N=60, d=10)", "read"),
    ("quad_forms_lower (L=20000, d=50)", "quad"),
]


def run_case(kind, repeats=3):
    from read_dro import _kernels

    rng = np.random.default_rng(0)
    if kind == "enet":
        A = rng.standard_normal((80, 50))
        G = A.T @ A / 80
        c = rng.standard_normal(50)
        fn = lambda: _kernels.enet_cd(G, c, 0.05, 0.05, 1e-10, 10000)
    elif kind == "phi":
        Theta = rng.standard_normal((50, 10))
        beta = rng.standard_normal(50)
        inv_lam = rng.uniform(0.01, 1.0, 10)
        fn = lambda: _kernels.phi_kappa_subgrad(beta, Theta, inv_lam, False, 1e-8, 5000)
    elif kind == "read":
        X = rng.standard_normal((60, 10))
        y = X @ rng.standard_normal(10) + rng.standard_normal(60)
        psi = np.eye(10)
        beta0 = rng.standard_normal(10)
        fn = lambda: _kernels.read_subgrad_descent(X, y, psi, 0.3, beta0, 1e-12, 60000)
    elif kind == "quad":
        A = rng.standard_normal((50, 50))
        M = A @ A.T + np.eye(50)
        L = np.linalg.cholesky(M)
        H = rng.standard_normal((20000, 50))
        fn = lambda: _kernels.quad_forms_lower(L, H)
    else:
        raise ValueError(kind)

    fn()  # warm-up (JIT compile on the numba backend)
    return min(_timed(fn) for _ in range(repeats))


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def run_single():
    from read_dro._backend import USE_NUMBA

    out = {"backend": "numba" if USE_NUMBA else "numpy", "times": {}}
    for label, kind in CASES:
        out["times"][label] = run_case(kind)
    print(json.dumps(out))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--single", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.single:
        run_single()
        return

    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, READ_DRO_NO_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, __file__, "--single"],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        doc = json.loads(proc.stdout.strip().splitlines()[-1])
        results[doc["backend"]] = doc["times"]

    width = max(len(label) for label, _ in CASES)
    print(f"{'kernel':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for label, _ in CASES:
        t_nb = results.get("numba", {}).get(label)
        t_np = results["numpy"][label]
        if t_nb is None:
            print(f"{label:<{width}}  {'n/a':>10}  {t_np:>9.4f}s  {'n/a':>8}")
        else:
            print(
                f"{label:<{width}}  {t_nb:>9.4f}s  {t_np:>9.4f}s  {t_np / t_nb:>7.1f}x"
            )


if __name__ == "__main__":
    main()
