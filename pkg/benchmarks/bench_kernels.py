"""Benchmark the compiled fitting kernels against the numpy fallback.

Times the three kernel entry points (logistic IRLS, canonical NLL,
canonical objective with gradient and Hessian) on simulated Hurdle data
at several problem sizes, then times one end-to-end exhaustive structure
search per backend in a subprocess (the backend is chosen at import, so
in-process switching is not possible).

Run:  python3 benchmarks/bench_kernels.py [--quick]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from hurdledag import _fitkern_py

try:
    from hurdledag import _fitkern
except ImportError:
    _fitkern = None


def _make_problem(n: int, p: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    w = rng.normal(scale=0.5, size=p)
    z = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-(X @ w)))).astype(float)
    y = np.where(z > 0, rng.normal(loc=X @ w, scale=1.0, size=n), 0.0)
    return X, y, z


def _time(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(sizes: list[tuple[int, int]], repeat: int) -> None:
    backends = [("python", _fitkern_py)]
    if _fitkern is not None:
        backends.append(("cython", _fitkern))
    header = f"{'case':<34}" + "".join(f"{name:>12}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for n, p in sizes:
        X, y, z = _make_problem(n, p, seed=n + p)
        a = np.full(p, 0.1)
        b = np.full(p, -0.1)
        rows: dict[str, list[float]] = {}
        for name, mod in backends:
            rows.setdefault("logistic_irls", []).append(
                _time(lambda m=mod: m.logistic_irls(X, z, 1e-4), repeat)
            )
            rows.setdefault("canonical_nll", []).append(
                _time(lambda m=mod: m.canonical_nll(X, y, z, a, b, 0.0), repeat)
            )
            rows.setdefault("canonical_objective", []).append(
                _time(lambda m=mod: m.canonical_objective(X, y, z, a, b, 0.0), repeat)
            )
        for case, times in rows.items():
            line = f"{f'{case} n={n} p={p}':<34}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
            if len(times) == 2:
                line += f"{times[0] / times[1]:>9.1f}x"
            print(line)
    if _fitkern is None:
        print("\ncompiled extension not built; showing numpy fallback only")


_SEARCH_SNIPPET = """
import time
import numpy as np
from hurdledag.fitting import FitConfig
from hurdledag.kernels import BACKEND
from hurdledag.search import ScoreCache, exhaustive_search
from hurdledag.simulate import Chain, GroundTruthSpec, ancestral_sample, build_truth

model = build_truth(GroundTruthSpec(Chain(5), "canonical-linear", seed=7))
data = ancestral_sample(model, {n}, np.random.default_rng(7))
t0 = time.perf_counter()
cache = ScoreCache(data, FitConfig(kind="canonical", degrees=(1,)), max_in_degree=4)
exhaustive_search(cache)
print(f"{{BACKEND}}: {{time.perf_counter() - t0:.2f}}s")
"""


def bench_search(n: int) -> None:
    print(f"\nend-to-end exhaustive search, chain m=5 canonical fits, n={n}:")
    for env_val in ("0", "1"):
        env = dict(os.environ, HURDLEDAG_PURE_PYTHON=env_val)
        out = subprocess.run(
            [sys.executable, "-c", _SEARCH_SNIPPET.format(n=n)],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        print("  " + out.stdout.strip())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--quick", action="store_true", help="smaller sizes, fewer repeats")
    args = parser.parse_args()
    if args.quick:
        sizes = [(500, 3), (2000, 6)]
        repeat, n_search = 3, 1000
    else:
        sizes = [(500, 3), (2000, 6), (8000, 6), (8000, 15)]
        repeat, n_search = 5, 4000
    bench_kernels(sizes, repeat)
    bench_search(n_search)


if __name__ == "__main__":
    main()
