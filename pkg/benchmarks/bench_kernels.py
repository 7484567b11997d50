"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` time per call for
each backend and the speedup.
"""

import argparse
import timeit

import numpy as np
from scipy.special import logsumexp

from graphscore import _kernels_py, quadrature

try:
    from graphscore import _kernels
except ImportError:  # extension not built
    _kernels = None


def _cases():
    rng = np.random.default_rng(0)
    nodes, log_w = quadrature.subset_nodes(quadrature.DEFAULT_POINTS, 5)
    log_eps = np.ascontiguousarray(rng.normal(-3.0, 1.0, size=5))
    yield "subset_loglik_grad (K=5)", 2000, lambda m: m.subset_loglik_grad(log_eps, nodes, log_w)

    phi = np.ascontiguousarray(rng.normal(size=23))
    log_rate = np.array([np.logaddexp(phi[c], logsumexp(np.sort(np.delete(phi, c))[:18])) for c in range(23)])
    inodes, ilog_w = quadrature.inclusion_nodes(quadrature.DEFAULT_POINTS, 23, 5)
    yield "inclusion_probs (m=23, K=5)", 20, lambda m: m.inclusion_probs(phi, log_rate, 5, inodes, ilog_w)

    n, steps = 20, 5000
    a = (rng.random((n, n)) < 0.15).astype(float)
    shift = (a + a.T + np.eye(n)) / (2 * n)
    powers = np.ascontiguousarray(np.stack([np.eye(n), shift, shift @ shift]))
    theta = np.ascontiguousarray(np.array([[2.5, -2.0], [3.0, -0.5], [-1.0, 0.5]]))
    noise = rng.normal(size=(steps, n))
    yield f"gpvar_recursion (N={n}, T={steps})", 2, lambda m: m.gpvar_recursion(powers, theta, noise.copy())


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = [("python", _kernels_py)] + ([("cython", _kernels)] if _kernels else [])
    print(f"{'kernel':36s}" + "".join(f"{name:>14s}" for name, _ in backends) + ("  speedup" if _kernels else ""))
    for label, number, call in _cases():
        times = []
        for _, mod in backends:
            best = min(timeit.repeat(lambda: call(mod), number=number, repeat=args.repeat)) / number
            times.append(best)
        row = f"{label:36s}" + "".join(f"{t * 1e6:11.1f} us" for t in times)
        if len(times) == 2:
            row += f"  {times[0] / times[1]:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
