# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (see ``_kernels_py`` for the reference)."""

import numpy as np

from libc.math cimport exp, expm1, log, log1p, tanh

cdef double LN2 = 0.6931471805599453


cdef inline double log1mexp_neg(double x) nogil:
    if x < LN2:
        return log(-expm1(-x))
    return log1p(-exp(-x))


cdef inline double x_over_expm1(double x) nogil:
    cdef double d
    if x < 1e-300:
        return 1.0
    if x > 700.0:
        return 0.0
    d = expm1(x)
    return x / d


def subset_loglik_grad(const double[::1] log_eps, const double[::1] nodes, const double[::1] log_w):
    cdef Py_ssize_t K = log_eps.shape[0], n = nodes.shape[0], j, k
    cdef double[::1] lg = np.empty(n)
    cdef double m = -1e308, total = 0.0, s, acc, x
    grad_arr = np.zeros(K)
    cdef double[::1] grad = grad_arr
    for k in range(n):
        s = nodes[k]
        acc = log_w[k] - exp(s)
        for j in range(K):
            acc += log1mexp_neg(exp(log_eps[j] + s))
        lg[k] = acc
        if acc > m:
            m = acc
    for k in range(n):
        lg[k] = exp(lg[k] - m)
        total += lg[k]
    for k in range(n):
        s = nodes[k]
        acc = lg[k] / total
        for j in range(K):
            x = exp(log_eps[j] + s)
            grad[j] += acc * x_over_expm1(x)
    return m + log(total), grad_arr


def inclusion_probs(const double[::1] phi, const double[::1] log_rate, int k,
                    const double[::1] nodes, const double[::1] log_w):
    cdef Py_ssize_t m = phi.shape[0], n = nodes.shape[0], i, j, c, a
    out_arr = np.zeros(m)
    cdef double[::1] out = out_arr
    cdef double[::1] dp = np.empty(k)
    cdef double[::1] t = np.exp(np.asarray(nodes))
    cdef double[::1] w = np.exp(np.asarray(log_w))
    cdef double[::1] rate = np.empty(m)
    cdef double rho_i, q, stay, pb, total
    for i in range(m):
        for j in range(m):
            rate[j] = exp(phi[j] - log_rate[i])
        rho_i = rate[i]
        total = 0.0
        for a in range(n):
            dp[0] = 1.0
            for c in range(1, k):
                dp[c] = 0.0
            for j in range(m):
                if j == i:
                    continue
                q = -expm1(-rate[j] * t[a])
                stay = 1.0 - q
                for c in range(k - 1, 0, -1):
                    dp[c] = dp[c] * stay + dp[c - 1] * q
                dp[0] = dp[0] * stay
            pb = 0.0
            for c in range(k):
                pb += dp[c]
            total += w[a] * rho_i * exp(-rho_i * t[a]) * pb
        out[i] = total
    return out_arr


def gpvar_recursion(const double[:, :, ::1] powers, const double[:, ::1] theta, double[:, ::1] x):
    cdef Py_ssize_t n_l = theta.shape[0], n_q = theta.shape[1]
    cdef Py_ssize_t T = x.shape[0], N = x.shape[1], t, l, q, r, c
    cdef double[:, :, ::1] cache = np.zeros((n_l, T, N))
    cdef double[::1] z = np.zeros(N)
    cdef double acc
    for t in range(T):
        if t >= n_q:
            for r in range(N):
                z[r] = 0.0
            for q in range(1, n_q + 1):
                for l in range(n_l):
                    for r in range(N):
                        z[r] += theta[l, q - 1] * cache[l, t - q, r]
            for r in range(N):
                x[t, r] += tanh(z[r])
        for l in range(n_l):
            for r in range(N):
                acc = 0.0
                for c in range(N):
                    acc += powers[l, r, c] * x[t, c]
                cache[l, t, r] = acc
    return np.asarray(x)
