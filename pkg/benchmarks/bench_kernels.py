#!/usr/bin/env python3
"""Compare the compiled stencil kernels against the pure-NumPy fallback.

Runs each hot kernel (Laplacian apply, coupled-operator apply, Jacobi CG)
on both backends at several grid sizes, checks the results agree, and
times an end-to-end eigenvalue solve per backend in subprocesses so the
import-time backend selection (MULTIPATCH_KERNELS) is exercised for real.

Usage:
    python benchmarks/bench_kernels.py [--sizes 61 121 181] [--hosts 3]
                                       [--repeats 5] [--skip-e2e]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from multipatch._kernels import fallback

try:
    from multipatch._kernels import _stencil
except ImportError:
    _stencil = None


def best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def rel_diff(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(a))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


def micro(sizes: list[int], hosts: int, repeats: int) -> None:
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16} {'grid':>9} {'python':>10} {'compiled':>10} "
          f"{'speedup':>8} {'max rel diff':>13}")
    for m in sizes:
        dims = (m, m)
        n = m * m
        inv_h2 = (m / 12.0) ** 2
        x = rng.standard_normal((hosts, n))
        w = 1.0 + rng.random((hosts, n))
        coup, nu = 0.25, 0.5

        cases = [
            ("lap_apply", lambda im: im.lap_apply(x, dims, inv_h2)),
            ("coupled_apply", lambda im: im.coupled_apply(x, w, coup, nu, dims, inv_h2)),
            ("cg_jacobi(1e-6)", lambda im: im.cg_jacobi(
                x, w, coup, nu, dims, inv_h2, 1e-6, 500)[0]),
        ]
        for name, call in cases:
            r_py = call(fallback)
            t_py = best_time(lambda: call(fallback), repeats)
            if _stencil is None:
                print(f"{name:<16} {m:>4}x{m:<4} {t_py * 1e3:>8.2f}ms "
                      f"{'n/a':>10} {'':>8} (extension not built)")
                continue
            r_c = call(_stencil)
            t_c = best_time(lambda: call(_stencil), repeats)
            print(f"{name:<16} {m:>4}x{m:<4} {t_py * 1e3:>8.2f}ms "
                  f"{t_c * 1e3:>8.2f}ms {t_py / t_c:>7.1f}x {rel_diff(r_py, r_c):>13.2e}")


_E2E_SNIPPET = """
import json, time
from multipatch import _kernels
from multipatch.analytics import ModelParams, symmetric_pair
from multipatch.eigen import lambda_H
p = ModelParams(landscape=symmetric_pair(alpha=1.0, r_max=1.0, beta=1.0,
                                         extra=((0.5, 1.5),)),
                mu=2**0.5, delta=1.0)
t0 = time.perf_counter()
res = lambda_H(p, accuracy=1e-4)
print(json.dumps({"backend": _kernels.BACKEND, "value": res.value,
                  "seconds": time.perf_counter() - t0}))
"""


def end_to_end() -> None:
    print("\nend-to-end: three-host eigenvalue at accuracy 1e-4")
    results = {}
    for backend in ("python", "compiled"):
        if backend == "compiled" and _stencil is None:
            print("  compiled: extension not built, skipped")
            continue
        env = dict(os.environ, MULTIPATCH_KERNELS=backend)
        out = subprocess.run([sys.executable, "-c", _E2E_SNIPPET], env=env,
                             capture_output=True, text=True, check=True)
        rec = json.loads(out.stdout.strip().splitlines()[-1])
        results[backend] = rec
        print(f"  {rec['backend']:<9} lambda={rec['value']:.12f}  "
              f"{rec['seconds']:.2f}s")
    if len(results) == 2:
        dv = abs(results["python"]["value"] - results["compiled"]["value"])
        ratio = results["python"]["seconds"] / results["compiled"]["seconds"]
        print(f"  agreement |d lambda| = {dv:.2e}, speedup {ratio:.1f}x")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[61, 121, 181])
    ap.add_argument("--hosts", type=int, default=3)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args()
    print(f"numpy {np.__version__}, compiled extension "
          f"{'available' if _stencil is not None else 'NOT built'}")
    micro(args.sizes, args.hosts, args.repeats)
    if not args.skip_e2e:
        end_to_end()


if __name__ == "__main__":
    main()
