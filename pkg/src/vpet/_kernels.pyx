# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled training kernels.

Same contract as ``vpet._train_py``: run the full mini-batch training loop
in place and return -1, or the 0-based step index at which the loss went
non-finite. The caller supplies parameter init and per-epoch batch orders,
so this module makes no random choices of its own.
"""

from libc.math cimport cos, exp, isfinite, log, pow, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double BETA1 = 0.9
cdef double BETA2 = 0.999
cdef double EPS = 1e-8
cdef double PI = 3.141592653589793


cdef inline double _lr_at(long step, double base_lr, long warmup_iters,
                          long total_iters) noexcept nogil:
    cdef double progress
    if warmup_iters > 0 and step < warmup_iters:
        return base_lr * (step + 1) / warmup_iters
    if total_iters - warmup_iters <= 0:
        return base_lr
    progress = <double>(step - warmup_iters) / <double>(total_iters - warmup_iters)
    return base_lr * 0.5 * (1.0 + cos(PI * progress))


cdef inline void _adamw_update(double[::1] p, double[::1] g, double[::1] m,
                               double[::1] v, double bc1, double bc2,
                               double lr, double wd) noexcept nogil:
    cdef Py_ssize_t i
    cdef double mhat, vhat
    for i in range(p.shape[0]):
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i]
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i]
        mhat = m[i] / bc1
        vhat = v[i] / bc2
        p[i] -= lr * (mhat / (sqrt(vhat) + EPS) + wd * p[i])


def train_linear(const double[:, ::1] X, const double[:, ::1] T, W_arr, b_arr,
                 const cnp.int64_t[:, ::1] perms, int batch_size, double lr,
                 double weight_decay, long warmup_iters, long total_iters):
    cdef double[:, ::1] W = W_arr
    cdef double[::1] b = b_arr
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t C = W.shape[1]
    cdef Py_ssize_t epochs = perms.shape[0]

    mW_arr = np.zeros((d, C))
    vW_arr = np.zeros((d, C))
    mb_arr = np.zeros(C)
    vb_arr = np.zeros(C)
    logits_arr = np.empty((batch_size, C))
    G_arr = np.empty((batch_size, C))
    gW_arr = np.empty((d, C))
    gb_arr = np.empty(C)
    cdef double[::1] mW = mW_arr.ravel()
    cdef double[::1] vW = vW_arr.ravel()
    cdef double[::1] mb = mb_arr
    cdef double[::1] vb = vb_arr
    cdef double[::1] Wflat = W_arr.ravel()
    cdef double[:, ::1] logits = logits_arr
    cdef double[:, ::1] G = G_arr
    cdef double[:, ::1] gW2d = gW_arr
    cdef double[::1] gW = gW_arr.ravel()
    cdef double[::1] gb = gb_arr

    cdef long step = 0
    cdef long bad = -1
    cdef Py_ssize_t e, start, bsz, i, j, c, row
    cdef double acc, mx, sumexp, lse, logq, loss, cur_lr, bc1, bc2

    with nogil:
        for e in range(epochs):
            if bad >= 0:
                break
            start = 0
            while start < n:
                bsz = n - start
                if bsz > batch_size:
                    bsz = batch_size
                loss = 0.0
                for i in range(bsz):
                    row = perms[e, start + i]
                    for c in range(C):
                        logits[i, c] = b[c]
                    for j in range(d):
                        acc = X[row, j]
                        for c in range(C):
                            logits[i, c] += acc * W[j, c]
                    mx = logits[i, 0]
                    for c in range(1, C):
                        if logits[i, c] > mx:
                            mx = logits[i, c]
                    sumexp = 0.0
                    for c in range(C):
                        sumexp += exp(logits[i, c] - mx)
                    lse = mx + log(sumexp)
                    for c in range(C):
                        logq = logits[i, c] - lse
                        loss -= T[row, c] * logq
                        G[i, c] = (exp(logq) - T[row, c]) / bsz
                loss /= bsz
                if not isfinite(loss):
                    bad = step
                    break

                for j in range(d):
                    for c in range(C):
                        gW2d[j, c] = 0.0
                for c in range(C):
                    gb[c] = 0.0
                for i in range(bsz):
                    row = perms[e, start + i]
                    for c in range(C):
                        gb[c] += G[i, c]
                    for j in range(d):
                        acc = X[row, j]
                        for c in range(C):
                            gW2d[j, c] += acc * G[i, c]

                cur_lr = _lr_at(step, lr, warmup_iters, total_iters)
                bc1 = 1.0 - pow(BETA1, step + 1)
                bc2 = 1.0 - pow(BETA2, step + 1)
                _adamw_update(Wflat, gW, mW, vW, bc1, bc2, cur_lr, weight_decay)
                _adamw_update(b, gb, mb, vb, bc1, bc2, cur_lr, weight_decay)
                step += 1
                start += batch_size
    return bad


def train_mlp(const double[:, ::1] X, const double[:, ::1] T, W1_arr, b1_arr, W2_arr, b2_arr,
              const cnp.int64_t[:, ::1] perms, int batch_size, double lr,
              double weight_decay, long warmup_iters, long total_iters):
    cdef double[:, ::1] W1 = W1_arr
    cdef double[::1] b1 = b1_arr
    cdef double[:, ::1] W2 = W2_arr
    cdef double[::1] b2 = b2_arr
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t H = W1.shape[1]
    cdef Py_ssize_t C = W2.shape[1]
    cdef Py_ssize_t epochs = perms.shape[0]

    mW1 = np.zeros(d * H); vW1 = np.zeros(d * H)
    mb1 = np.zeros(H); vb1 = np.zeros(H)
    mW2 = np.zeros(H * C); vW2 = np.zeros(H * C)
    mb2 = np.zeros(C); vb2 = np.zeros(C)
    Z1_arr = np.empty((batch_size, H))
    A1_arr = np.empty((batch_size, H))
    logits_arr = np.empty((batch_size, C))
    G_arr = np.empty((batch_size, C))
    dZ1_arr = np.empty((batch_size, H))
    gW1_arr = np.empty((d, H)); gb1_arr = np.empty(H)
    gW2_arr = np.empty((H, C)); gb2_arr = np.empty(C)

    cdef double[::1] mW1v = mW1, vW1v = vW1, mb1v = mb1, vb1v = vb1
    cdef double[::1] mW2v = mW2, vW2v = vW2, mb2v = mb2, vb2v = vb2
    cdef double[::1] W1flat = W1_arr.ravel()
    cdef double[::1] W2flat = W2_arr.ravel()
    cdef double[:, ::1] Z1 = Z1_arr
    cdef double[:, ::1] A1 = A1_arr
    cdef double[:, ::1] logits = logits_arr
    cdef double[:, ::1] G = G_arr
    cdef double[:, ::1] dZ1 = dZ1_arr
    cdef double[:, ::1] gW1 = gW1_arr
    cdef double[::1] gW1flat = gW1_arr.ravel()
    cdef double[::1] gb1 = gb1_arr
    cdef double[:, ::1] gW2 = gW2_arr
    cdef double[::1] gW2flat = gW2_arr.ravel()
    cdef double[::1] gb2 = gb2_arr

    cdef long step = 0
    cdef long bad = -1
    cdef Py_ssize_t e, start, bsz, i, j, c, h, row
    cdef double acc, mx, sumexp, lse, logq, loss, cur_lr, bc1, bc2

    with nogil:
        for e in range(epochs):
            if bad >= 0:
                break
            start = 0
            while start < n:
                bsz = n - start
                if bsz > batch_size:
                    bsz = batch_size
                loss = 0.0
                for i in range(bsz):
                    row = perms[e, start + i]
                    for h in range(H):
                        Z1[i, h] = b1[h]
                    for j in range(d):
                        acc = X[row, j]
                        for h in range(H):
                            Z1[i, h] += acc * W1[j, h]
                    for h in range(H):
                        A1[i, h] = Z1[i, h] if Z1[i, h] > 0.0 else 0.0
                    for c in range(C):
                        logits[i, c] = b2[c]
                    for h in range(H):
                        acc = A1[i, h]
                        for c in range(C):
                            logits[i, c] += acc * W2[h, c]
                    mx = logits[i, 0]
                    for c in range(1, C):
                        if logits[i, c] > mx:
                            mx = logits[i, c]
                    sumexp = 0.0
                    for c in range(C):
                        sumexp += exp(logits[i, c] - mx)
                    lse = mx + log(sumexp)
                    for c in range(C):
                        logq = logits[i, c] - lse
                        loss -= T[row, c] * logq
                        G[i, c] = (exp(logq) - T[row, c]) / bsz
                loss /= bsz
                if not isfinite(loss):
                    bad = step
                    break

                for h in range(H):
                    gb1[h] = 0.0
                    for j in range(d):
                        gW1[j, h] = 0.0
                for c in range(C):
                    gb2[c] = 0.0
                    for h in range(H):
                        gW2[h, c] = 0.0
                for i in range(bsz):
                    row = perms[e, start + i]
                    for c in range(C):
                        gb2[c] += G[i, c]
                    for h in range(H):
                        for c in range(C):
                            gW2[h, c] += A1[i, h] * G[i, c]
                        acc = 0.0
                        for c in range(C):
                            acc += G[i, c] * W2[h, c]
                        dZ1[i, h] = acc if Z1[i, h] > 0.0 else 0.0
                        gb1[h] += dZ1[i, h]
                    for j in range(d):
                        acc = X[row, j]
                        for h in range(H):
                            gW1[j, h] += acc * dZ1[i, h]

                cur_lr = _lr_at(step, lr, warmup_iters, total_iters)
                bc1 = 1.0 - pow(BETA1, step + 1)
                bc2 = 1.0 - pow(BETA2, step + 1)
                _adamw_update(W1flat, gW1flat, mW1v, vW1v, bc1, bc2, cur_lr,
                              weight_decay)
                _adamw_update(b1, gb1, mb1v, vb1v, bc1, bc2, cur_lr, weight_decay)
                _adamw_update(W2flat, gW2flat, mW2v, vW2v, bc1, bc2, cur_lr,
                              weight_decay)
                _adamw_update(b2, gb2, mb2v, vb2v, bc1, bc2, cur_lr, weight_decay)
                step += 1
                start += batch_size
    return bad
