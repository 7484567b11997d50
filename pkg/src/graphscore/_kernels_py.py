"""Pure numpy versions of the hot kernels.

Signatures and semantics mirror the compiled ``_kernels`` module; results
agree to rounding, not bit-for-bit.
"""

import numpy as np

_LN2 = np.log(2.0)


def _log1mexp_neg(x):
    """``log(1 - exp(-x))`` for ``x > 0``."""
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x < _LN2, np.log(-np.expm1(-x)), np.log1p(-np.exp(-x)))


def _x_over_expm1(x):
    with np.errstate(over="ignore", invalid="ignore"):
        r = x / np.expm1(x)
    return np.where(x < 1e-300, 1.0, np.where(np.isfinite(r), r, 0.0))


def subset_loglik_grad(log_eps, nodes, log_w):
    """Log of ``int_0^inf exp(-t) prod_j (1 - exp(-eps_j t)) dt`` and its
    derivative with respect to each ``log eps_j``.

    ``nodes`` are quadrature abscissae in ``s = log t`` and ``log_w`` the
    matching log weights (Jacobian included).
    """
    log_eps = np.asarray(log_eps, dtype=float)
    t = np.exp(nodes)
    x = np.exp(log_eps[:, None] + nodes[None, :])  # (K, n)
    lg = log_w - t + _log1mexp_neg(x).sum(axis=0)
    m = lg.max()
    p = np.exp(lg - m)
    total = p.sum()
    logp = m + np.log(total)
    post = p / total
    grad = (_x_over_expm1(x) * post[None, :]).sum(axis=1)
    return float(logp), grad


def inclusion_probs(phi, log_rate, k, nodes, log_w):
    """Probability that each candidate lands in a Gumbel-top-``k`` subset.

    ``phi`` holds the (temperature-scaled) candidate scores and ``log_rate[i]``
    the log decay rate used to rescale candidate ``i``'s integral.
    """
    phi = np.asarray(phi, dtype=float)
    m = phi.size
    t = np.exp(nodes)[None, :]  # (1, n)
    rho_i = np.exp(phi - log_rate)[:, None]  # (m, 1)
    dp = np.zeros((k, m, t.shape[1]))
    dp[0] = 1.0
    for j in range(m):
        r = np.exp(phi[j] - log_rate)[:, None]
        q = -np.expm1(-r * t)
        q[j] = 0.0
        stay = 1.0 - q
        nxt = dp * stay
        nxt[1:] += dp[:-1] * q
        dp = nxt
    pb = dp.sum(axis=0)
    integrand = np.exp(log_w)[None, :] * rho_i * np.exp(-rho_i * t) * pb
    return integrand.sum(axis=1)


def gpvar_recursion(powers, theta, x):
    """Run ``x[t] = tanh(sum_lq theta[l,q-1] P_l x[t-q]) + x[t]`` in place for ``t >= Q``.

    On entry rows ``t >= Q`` of ``x`` hold the noise; rows ``< Q`` the initial state.
    """
    n_l, n_q = theta.shape
    T = x.shape[0]
    cache = np.zeros((n_l, T, x.shape[1]))
    for t in range(n_q):
        for l in range(n_l):
            cache[l, t] = powers[l] @ x[t]
    for t in range(n_q, T):
        z = np.zeros(x.shape[1])
        for q in range(1, n_q + 1):
            for l in range(n_l):
                z += theta[l, q - 1] * cache[l, t - q]
        x[t] += np.tanh(z)
        for l in range(n_l):
            cache[l, t] = powers[l] @ x[t]
    return x
