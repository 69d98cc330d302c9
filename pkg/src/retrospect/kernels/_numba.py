"""Numba-accelerated kernel implementations.

Serial @njit loops, IEEE semantics (no fastmath), compiled artifacts cached
on disk. Mirrors ``_numpy.py`` function for function; reductions run in a
different order than numpy's pairwise summation, so values may differ from
the reference backend in the last ulp.
"""

import math

import numpy as np
from numba import njit

PROB_FLOOR = 1e-12


@njit(cache=True)
def relu_fwd(x):
    out = np.empty_like(x)
    flat_x = x.ravel()
    flat_o = out.ravel()
    for i in range(flat_x.size):
        v = flat_x[i]
        flat_o[i] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def relu_bwd(x, g):
    out = np.empty_like(x)
    flat_x = x.ravel()
    flat_g = g.ravel()
    flat_o = out.ravel()
    for i in range(flat_x.size):
        flat_o[i] = flat_g[i] if flat_x[i] > 0.0 else 0.0
    return out


@njit(cache=True)
def softmax_fwd(x):
    m, n = x.shape
    out = np.empty((m, n))
    for i in range(m):
        hi = x[i, 0]
        for j in range(1, n):
            if x[i, j] > hi:
                hi = x[i, j]
        s = 0.0
        for j in range(n):
            e = math.exp(x[i, j] - hi)
            out[i, j] = e
            s += e
        for j in range(n):
            out[i, j] /= s
    return out


@njit(cache=True)
def softmax_bwd(p, g):
    m, n = p.shape
    out = np.empty((m, n))
    for i in range(m):
        dot = 0.0
        for j in range(n):
            dot += g[i, j] * p[i, j]
        for j in range(n):
            out[i, j] = p[i, j] * (g[i, j] - dot)
    return out


@njit(cache=True)
def l1_total_fwd(a, b):
    fa = a.ravel()
    fb = b.ravel()
    s = 0.0
    for i in range(fa.size):
        s += abs(fa[i] - fb[i])
    return s


@njit(cache=True)
def l1_total_bwd(a, b, g):
    out = np.empty_like(a)
    fa = a.ravel()
    fb = b.ravel()
    fo = out.ravel()
    for i in range(fa.size):
        d = fa[i] - fb[i]
        if d > 0.0:
            fo[i] = g
        elif d < 0.0:
            fo[i] = -g
        else:
            fo[i] = 0.0
    return out


@njit(cache=True)
def l1_rows_fwd(a, b):
    m, n = a.shape
    out = np.empty(m)
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += abs(a[i, j] - b[i, j])
        out[i] = s
    return out


@njit(cache=True)
def l1_rows_bwd(a, b, g):
    m, n = a.shape
    out = np.empty((m, n))
    for i in range(m):
        gi = g[i]
        for j in range(n):
            d = a[i, j] - b[i, j]
            if d > 0.0:
                out[i, j] = gi
            elif d < 0.0:
                out[i, j] = -gi
            else:
                out[i, j] = 0.0
    return out


@njit(cache=True)
def l2_total_fwd(a, b):
    fa = a.ravel()
    fb = b.ravel()
    s = 0.0
    for i in range(fa.size):
        d = fa[i] - fb[i]
        s += d * d
    return math.sqrt(s)


@njit(cache=True)
def l2_total_bwd(a, b, dist, g):
    out = np.zeros_like(a)
    if dist == 0.0:
        return out
    fa = a.ravel()
    fb = b.ravel()
    fo = out.ravel()
    scale = g / dist
    for i in range(fa.size):
        fo[i] = (fa[i] - fb[i]) * scale
    return out


@njit(cache=True)
def l2_rows_fwd(a, b):
    m, n = a.shape
    out = np.empty(m)
    for i in range(m):
        s = 0.0
        for j in range(n):
            d = a[i, j] - b[i, j]
            s += d * d
        out[i] = math.sqrt(s)
    return out


@njit(cache=True)
def l2_rows_bwd(a, b, dists, g):
    m, n = a.shape
    out = np.empty((m, n))
    for i in range(m):
        if dists[i] == 0.0:
            for j in range(n):
                out[i, j] = 0.0
        else:
            scale = g[i] / dists[i]
            for j in range(n):
                out[i, j] = (a[i, j] - b[i, j]) * scale
    return out


@njit(cache=True)
def xent_fwd(p, labels):
    m = p.shape[0]
    s = 0.0
    for i in range(m):
        v = p[i, labels[i]]
        if v < PROB_FLOOR:
            v = PROB_FLOOR
        s += -math.log(v)
    return s / m


@njit(cache=True)
def xent_bwd(p, labels, g):
    m = p.shape[0]
    dp = np.zeros_like(p)
    for i in range(m):
        v = p[i, labels[i]]
        if v > PROB_FLOOR:
            dp[i, labels[i]] = -g / (m * v)
    return dp


@njit(cache=True)
def sgd_step(theta, grad, lr):
    ft = theta.ravel()
    fg = grad.ravel()
    for i in range(ft.size):
        ft[i] -= lr * fg[i]


@njit(cache=True)
def momentum_step(theta, vel, grad, lr, mu):
    ft = theta.ravel()
    fv = vel.ravel()
    fg = grad.ravel()
    for i in range(ft.size):
        fv[i] = mu * fv[i] + fg[i]
        ft[i] -= lr * fv[i]


@njit(cache=True)
def adam_step(theta, m, v, grad, lr, beta1, beta2, eps, t):
    ft = theta.ravel()
    fm = m.ravel()
    fv = v.ravel()
    fg = grad.ravel()
    # float exponent forces libm pow; an int exponent would lower to
    # repeated squaring and drift a ulp from the numpy backend
    c1 = 1.0 - beta1 ** float(t)
    c2 = 1.0 - beta2 ** float(t)
    for i in range(ft.size):
        fm[i] = beta1 * fm[i] + (1.0 - beta1) * fg[i]
        fv[i] = beta2 * fv[i] + (1.0 - beta2) * (fg[i] * fg[i])
        mhat = fm[i] / c1
        vhat = fv[i] / c2
        ft[i] -= lr * mhat / (math.sqrt(vhat) + eps)
