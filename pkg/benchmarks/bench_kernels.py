"""Compare the compiled and numpy kernel backends.

Times one Bellman phase worth of inner problems per divergence, a full
robust backward induction on the Gambler's Problem, and the brute-force grid
oracle.  Run with ``python benchmarks/bench_kernels.py [--repeat K]``.
"""
import argparse
import time

import numpy as np

from rpvl import kernels
from rpvl.core import DivergenceKind, UncertaintySpec
from rpvl.duals import batch_inner, oracle_simplex_grid
from rpvl.gamblers import build_gamblers, gamblers_metric
from rpvl.planner import robust_dp


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _phase_block(rng, rows=700, S=52):
    P = rng.dirichlet(np.full(S, 0.3), size=rows)
    v = rng.uniform(0, 50, size=S)
    return P, v


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    names = ["python"] + (["cython"] if kernels.compiled_backend is not None else [])
    if len(names) == 1:
        print("compiled kernels not built; timing the numpy backend only")
    rng = np.random.default_rng(0)
    P, v = _phase_block(rng)
    model = build_gamblers()
    cases = []
    for kind in DivergenceKind:
        spec = UncertaintySpec(kind, 0.2)
        cases.append((f"phase block {kind.value}", lambda b, s=spec: batch_inner(s, P, v, backend=b)))
    for kind in DivergenceKind:
        metric = gamblers_metric() if kind is DivergenceKind.WASSERSTEIN else None
        spec = UncertaintySpec(kind, 0.2, metric=metric)
        cases.append((f"gamblers robust_dp {kind.value}", lambda b, s=spec: robust_dp(model, s, backend=b)))
    p3 = np.array([0.2, 0.5, 0.3])
    v3 = np.array([0.0, 1.0, 3.0])
    cases.append(("grid oracle kl S=3", lambda b: oracle_simplex_grid("kl", p3, v3, 0.3, 1e-3, backend=b)))

    print(f"{'case':32s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases:
        times = [_best_of(lambda: fn(n), args.repeat) for n in names]
        line = f"{label:32s}" + "".join(f"{t * 1e3:10.1f}ms" for t in times)
        if len(times) > 1:
            line += f"{times[0] / times[1]:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
