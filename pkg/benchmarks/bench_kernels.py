"""Compiled vs pure-Python kernels, alone and inside a density sweep.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--points 400]

The kernel table times each routine on a stack of pencil-sized matrices.  The
pipeline rows run the same density sweep in a child process per backend
(the backend is fixed at import, see ``FREECONV_PURE_PYTHON``).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from freeconv import kernels

PIPELINE = """
import time, numpy as np
from freeconv import kernels, laws, subord
from freeconv.ncexpr import parse
p = parse("x*y+y*x+x^2", ["x", "y"])
law_map = {"x": laws.Semicircle(), "y": laws.MarchenkoPastur(0.25)}
z = np.linspace(-4, 10, %d) + 0.025j
t = time.perf_counter()
subord.scalar_cauchy(p, law_map, z)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def _stack(rng, P, n, herm=False):
    a = rng.normal(size=(P, n, n)) + 1j * rng.normal(size=(P, n, n))
    if herm:
        a = a + np.conj(np.swapaxes(a, 1, 2))
    return np.ascontiguousarray(a)


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    backends = {"python": kernels.load_backend("python")}
    try:
        backends["cython"] = kernels.load_backend("cython")
    except ImportError:
        print("compiled backend not built; timing the fallback only")
    rows = []
    for n, P in [(3, 4096), (6, 1024), (12, 256)]:
        a = _stack(rng, P, n)
        h = _stack(rng, P, n, herm=True)
        cases = {
            "lu_inv": lambda m: m.lu_inv(a),
            "jacobi_eigh": lambda m: m.jacobi_eigh(h, False),
            "hqr_eigvals": lambda m: m.hqr_eigvals(a[: max(1, P // 16)], 60),
        }
        for name, fn in cases.items():
            times = {b: min(timeit.repeat(lambda: fn(m), number=1, repeat=repeat)) for b, m in backends.items()}
            rows.append((name, n, P, times))
    print(f"{'kernel':<12} {'n':>3} {'stack':>6} " + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for name, n, P, times in rows:
        cols = " ".join(f"{times[b] * 1e3:9.2f}ms" for b in backends)
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<12} {n:>3} {P:>6} {cols}   {speed:6.1f}x")


def bench_pipeline(points):
    print(f"\ndensity sweep of xy+yx+x^2 at {points} points")
    for pure in ("0", "1"):
        env = dict(os.environ, FREECONV_PURE_PYTHON=pure, FREECONV_THREADS="1")
        out = subprocess.run([sys.executable, "-c", PIPELINE % points], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:<8} {float(out[1]):8.3f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--points", type=int, default=400)
    args = ap.parse_args(argv)
    bench_kernels(args.repeat)
    bench_pipeline(args.points)


if __name__ == "__main__":
    main()
