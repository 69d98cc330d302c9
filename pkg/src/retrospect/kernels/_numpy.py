"""Pure-numpy kernel implementations.

Reference backend for the hot inner loops of the training step: activation
and loss kernels plus the in-place optimizer updates. The numba backend in
``_numba.py`` mirrors this module function for function; keep the two in
sync (same signatures, same branch conditions, same clamping constants).
"""

import numpy as np

# Probabilities below this are treated as flat by the cross-entropy clamp.
PROB_FLOOR = 1e-12


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, g):
    return np.where(x > 0.0, g, 0.0)


def softmax_fwd(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(p, g):
    dot = (g * p).sum(axis=1, keepdims=True)
    return p * (g - dot)


def l1_total_fwd(a, b):
    return float(np.abs(a - b).sum())


def l1_total_bwd(a, b, g):
    return np.sign(a - b) * g


def l1_rows_fwd(a, b):
    return np.abs(a - b).sum(axis=1)


def l1_rows_bwd(a, b, g):
    return np.sign(a - b) * g[:, None]


def l2_total_fwd(a, b):
    d = a - b
    return float(np.sqrt((d * d).sum()))


def l2_total_bwd(a, b, dist, g):
    if dist == 0.0:
        return np.zeros_like(a)
    return (a - b) * (g / dist)


def l2_rows_fwd(a, b):
    d = a - b
    return np.sqrt((d * d).sum(axis=1))


def l2_rows_bwd(a, b, dists, g):
    scale = np.where(dists == 0.0, 0.0, g / np.where(dists == 0.0, 1.0, dists))
    return (a - b) * scale[:, None]


def xent_fwd(p, labels):
    picked = p[np.arange(p.shape[0]), labels]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def xent_bwd(p, labels, g):
    rows = np.arange(p.shape[0])
    picked = p[rows, labels]
    dp = np.zeros_like(p)
    live = picked > PROB_FLOOR  # clamped rows sit on the flat part of the loss
    dp[rows[live], labels[live]] = -g / (p.shape[0] * picked[live])
    return dp


def sgd_step(theta, grad, lr):
    theta -= lr * grad


def momentum_step(theta, vel, grad, lr, mu):
    vel *= mu
    vel += grad
    theta -= lr * vel


def adam_step(theta, m, v, grad, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    theta -= lr * mhat / (np.sqrt(vhat) + eps)
