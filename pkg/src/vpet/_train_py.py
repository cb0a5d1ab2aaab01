"""Pure-numpy training kernels: the fallback backend.

Both backends (this module and the compiled ``vpet._kernels``) implement the
same loop: mini-batch soft cross-entropy with decoupled-weight-decay
adaptive-moment updates (beta1=0.9, beta2=0.999, eps=1e-8) and a cosine
learning-rate schedule with linear warmup. All random choices (parameter
init, batch order) are made by the caller and passed in, so the two backends
differ only in float summation order.
"""

from __future__ import annotations

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def lr_at(step: int, base_lr: float, warmup_iters: int, total_iters: int) -> float:
    """Schedule value for 0-based global step."""
    if warmup_iters > 0 and step < warmup_iters:
        return base_lr * (step + 1) / warmup_iters
    span = total_iters - warmup_iters
    if span <= 0:
        return base_lr
    progress = (step - warmup_iters) / span
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * progress))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _adamw_step(param, grad, m, v, t, lr, weight_decay):
    m *= BETA1
    m += (1.0 - BETA1) * grad
    v *= BETA2
    v += (1.0 - BETA2) * grad * grad
    mhat = m / (1.0 - BETA1 ** t)
    vhat = v / (1.0 - BETA2 ** t)
    param -= lr * (mhat / (np.sqrt(vhat) + EPS) + weight_decay * param)


def train_linear(X, T, W, b, perms, batch_size, lr, weight_decay,
                 warmup_iters, total_iters):
    """Train a linear head in place; returns -1 or the diverging step."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _train_linear(X, T, W, b, perms, batch_size, lr, weight_decay,
                             warmup_iters, total_iters)


def _train_linear(X, T, W, b, perms, batch_size, lr, weight_decay,
                  warmup_iters, total_iters):
    n = X.shape[0]
    mW = np.zeros_like(W)
    vW = np.zeros_like(W)
    mb = np.zeros_like(b)
    vb = np.zeros_like(b)
    step = 0
    for perm in perms:
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            Xb = X[idx]
            Tb = T[idx]
            logits = Xb @ W + b
            logq = log_softmax(logits)
            loss = -np.sum(Tb * logq) / len(idx)
            if not np.isfinite(loss):
                return step
            G = (np.exp(logq) - Tb) / len(idx)
            gW = Xb.T @ G
            gb = G.sum(axis=0)
            cur_lr = lr_at(step, lr, warmup_iters, total_iters)
            t = step + 1
            _adamw_step(W, gW, mW, vW, t, cur_lr, weight_decay)
            _adamw_step(b, gb, mb, vb, t, cur_lr, weight_decay)
            step += 1
    return -1


def train_mlp(X, T, W1, b1, W2, b2, perms, batch_size, lr, weight_decay,
              warmup_iters, total_iters):
    """Train a one-hidden-layer ReLU head in place; returns -1 or the step."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _train_mlp(X, T, W1, b1, W2, b2, perms, batch_size, lr,
                          weight_decay, warmup_iters, total_iters)


def _train_mlp(X, T, W1, b1, W2, b2, perms, batch_size, lr, weight_decay,
               warmup_iters, total_iters):
    n = X.shape[0]
    moments = [(np.zeros_like(p), np.zeros_like(p)) for p in (W1, b1, W2, b2)]
    step = 0
    for perm in perms:
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            Xb = X[idx]
            Tb = T[idx]
            Z1 = Xb @ W1 + b1
            A1 = np.maximum(Z1, 0.0)
            logits = A1 @ W2 + b2
            logq = log_softmax(logits)
            loss = -np.sum(Tb * logq) / len(idx)
            if not np.isfinite(loss):
                return step
            G = (np.exp(logq) - Tb) / len(idx)
            gW2 = A1.T @ G
            gb2 = G.sum(axis=0)
            dZ1 = (G @ W2.T) * (Z1 > 0.0)
            gW1 = Xb.T @ dZ1
            gb1 = dZ1.sum(axis=0)
            cur_lr = lr_at(step, lr, warmup_iters, total_iters)
            t = step + 1
            for p, g, (m, v) in zip((W1, b1, W2, b2), (gW1, gb1, gW2, gb2), moments):
                _adamw_step(p, g, m, v, t, cur_lr, weight_decay)
            step += 1
    return -1
