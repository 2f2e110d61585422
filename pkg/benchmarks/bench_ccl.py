"""Time the compiled and pure-Python connected-components kernels.

    python benchmarks/bench_ccl.py [--sizes 256,1024,4096] [--repeat 5]

Graphs are symmetrized 1-NN graphs of random unit vectors, the same shape
the trainer feeds the kernel every step.
"""
import argparse
import timeit

import numpy as np

from wcl import _kernels
from wcl.weakgraph import build_one_nn_adjacency


def one_nn_edges(n, d, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return build_one_nn_adjacency(x @ x.T).edge_list()


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="128,512,2048,8192")
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    kernels = {"python": _kernels.python_label_components}
    if _kernels.BACKEND == "cython":
        kernels["cython"] = _kernels.label_components
    else:
        print("compiled kernel not built; timing the Python fallback only")

    print(f"{'n':>6} {'edges':>7} " + " ".join(f"{k + ' (ms)':>13}" for k in kernels) + "  speedup")
    for n in map(int, args.sizes.split(",")):
        src, dst = one_nn_edges(n, args.dim, seed=n)
        ref = None
        times = {}
        for name, fn in kernels.items():
            labels, _ = fn(n, src, dst)
            if ref is None:
                ref = labels
            assert np.array_equal(labels, ref), f"{name} disagrees with python"
            loops = max(1, 20000 // n)
            best = min(timeit.repeat(lambda: fn(n, src, dst), number=loops, repeat=args.repeat)) / loops
            times[name] = 1e3 * best
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{n:>6} {len(src):>7} " + " ".join(f"{t:>13.4f}" for t in times.values()) + f"  {speed:6.1f}x")


if __name__ == "__main__":
    main()
