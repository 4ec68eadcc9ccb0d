"""Backend comparison: compiled active-set kernel vs the NumPy fallback.

Two views: raw kernel solves on random dense QPs (in-process, both modules
imported directly), and an end-to-end leader sweep on a sampled market
instance (subprocesses, since the backend is chosen at import).  Run as

    python3 benchmarks/bench_qp.py
"""

import os
import subprocess
import sys
import time

import numpy as np


def _random_problem(rng, n):
    B = rng.normal(size=(n, n))
    P = B.T @ B + np.eye(n)
    q = rng.normal(size=n)
    A = np.vstack([np.eye(n), -np.eye(n), rng.normal(size=(n, n))])
    A /= np.abs(A).max(axis=1, keepdims=True)
    b = np.concatenate([np.full(2 * n, -4.0), np.full(n, -50.0)])
    return P, q, A, b, np.zeros(n)


def bench_kernels(sizes=(4, 8, 16, 32), reps=40, seed=0):
    from lfnash._kernels import qp_py
    try:
        from lfnash._kernels import _active_set as qp_cy
    except ImportError:
        print("compiled kernel not built; nothing to compare")
        return
    print(f"{'n':>4} {'rows':>5} {'python':>12} {'compiled':>12} {'speedup':>8}")
    for n in sizes:
        rng = np.random.default_rng(seed)
        problems = [_random_problem(rng, n) for _ in range(reps)]
        times = {}
        for name, mod in (("python", qp_py), ("compiled", qp_cy)):
            t0 = time.perf_counter()
            for P, q, A, b, x0 in problems:
                x, lam, status, iters = mod.active_set_qp(P, q, A, b, 0, x0)
                assert status == qp_py.OPTIMAL
            times[name] = (time.perf_counter() - t0) / reps
        print(f"{n:>4} {3 * n:>5} {times['python'] * 1e3:>10.3f}ms "
              f"{times['compiled'] * 1e3:>10.3f}ms "
              f"{times['python'] / times['compiled']:>7.1f}x")


_E2E_SNIPPET = """
import time
import numpy as np
from lfnash.ridehail import sample_params, build_game
from lfnash.gauss_seidel import PgsConfig, run_escalating
from lfnash._kernels import backend_name

game = build_game(sample_params(2, 3, 2, seed=1007))
t0 = time.perf_counter()
res = run_escalating(game, PgsConfig(stop_eps=1e-4, max_sweeps=30))
print(backend_name(), res.status, time.perf_counter() - t0)
"""


def bench_end_to_end():
    rows = {}
    for backend in ("py", "cy"):
        env = dict(os.environ, LFNASH_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", _E2E_SNIPPET],
                             capture_output=True, text=True, env=env)
        if out.returncode != 0:
            print(f"backend {backend} failed:\n{out.stderr}")
            return
        name, status, secs = out.stdout.split()
        rows[name] = float(secs)
        print(f"  {name:>8}: {float(secs):6.2f}s  ({status})")
    if len(rows) == 2:
        print(f"  speedup: {rows['python'] / rows['compiled']:.2f}x")


if __name__ == "__main__":
    print("== kernel microbenchmark (random dense QPs) ==")
    bench_kernels()
    print()
    print("== end-to-end market sweep (N=2, M=3, H=2) ==")
    bench_end_to_end()
