"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 5000] [--repeat 5]

Graphs are cSBM instances; both backends get identical inputs and their
outputs are checked for agreement before timing.
"""
import argparse
import time

import numpy as np

from lpgia import kernels
from lpgia.graph import gen_csbm


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(g, rng):
    L = g.n_classes
    z0 = rng.dirichlet(np.ones(L), size=g.n)
    labels = rng.integers(L, size=g.n)
    cand = rng.choice(g.n, size=min(2000, g.n), replace=False)
    w = rng.uniform(0.1, 1.0, size=g.n)
    base = rng.uniform(size=L)
    adj = g.adjacency
    return {
        "propagate(T=50)": lambda impl: kernels.propagate(adj, z0, 0.9, 50, 0.0, impl=impl)[0],
        "neighbor_match_counts": lambda impl: kernels.neighbor_match_counts(adj, labels, labels, impl=impl),
        "majority_round": lambda impl: kernels.majority_round(adj, labels, L, impl=impl),
        "cluster_margins": lambda impl: kernels.cluster_margins(base, z0, cand, w, 0, 0.3, impl=impl),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--classes", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    impls = kernels.implementations()
    if "cython" not in impls:
        print("compiled extension not built; only the python backend is available")
    p_in = 8.0 / (args.n / args.classes)
    g = gen_csbm(args.n, args.classes, 32, p_in, p_in / 10, 1.0, args.seed)
    print(f"graph: n={g.n} m={g.m}  backends: {', '.join(impls)}")
    print(f"{'kernel':24s}" + "".join(f"{name:>12s}" for name in impls) + "     speedup")
    rng = np.random.default_rng(args.seed)
    for name, fn in cases(g, rng).items():
        outs = {k: fn(impl) for k, impl in impls.items()}
        ref = outs["python"]
        for k, out in outs.items():
            if not np.allclose(out, ref, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"{name}: backend {k} disagrees with python")
        times = {k: _time(lambda: fn(impl), args.repeat) for k, impl in impls.items()}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:24s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times.values()) + f"{speed:11.1f}x")


if __name__ == "__main__":
    main()
