"""Gauss-Legendre rules for the Gumbel subset integrals.

Both integrals are written over ``t = -log u`` and integrated in ``s = log t``,
where the integrands are smooth with at most double-exponential tails. A fixed
interval keeps nodes independent of the scores, so differentiating the
integrand at the nodes gives the exact gradient of the quadrature value.
"""

from functools import lru_cache

import numpy as np

DEFAULT_POINTS = 128
S_LOW = -30.0


@lru_cache(maxsize=64)
def _legendre(n_points: int):
    x, w = np.polynomial.legendre.leggauss(n_points)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def log_nodes(n_points: int, t_max: float):
    """Nodes in ``s`` on ``[S_LOW, log t_max]`` and log weights including ``ds = dt / t``."""
    return _log_nodes(int(n_points), float(t_max))


@lru_cache(maxsize=256)
def _log_nodes(n_points: int, t_max: float):
    if n_points < 2:
        raise ValueError("need at least two quadrature points")
    x, w = _legendre(n_points)
    lo, hi = S_LOW, float(np.log(t_max))
    s = lo + (hi - lo) * (x + 1.0) / 2.0
    log_w = np.log(w * (hi - lo) / 2.0) + s
    s.flags.writeable = False
    log_w.flags.writeable = False
    return s, log_w


def subset_nodes(n_points: int, k: int):
    """Rule for the unordered-subset integral with ``k`` members."""
    return log_nodes(n_points, 60.0 + 4.0 * k)


def inclusion_nodes(n_points: int, n_candidates: int, k: int):
    """Rule for inclusion probabilities; the range grows with ``log C(m-1, k-1)``."""
    from math import lgamma

    m = n_candidates
    log_comb = lgamma(m) - lgamma(k) - lgamma(m - k + 1)
    return log_nodes(n_points, 80.0 + 4.0 * k + log_comb)
