# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-example backward kernel for dense feed-forward heads.

Contract mirrors dpdesk._kernels_py.backprop_per_example; the hot loops
(per example, per token, per weight entry) run as plain C loops. Token
contributions accumulate in row order within each example, so results are
deterministic.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


def backprop_per_example(list acts, double[:, ::1] dlogits, long[::1] starts,
                         list weights, long[::1] act_codes,
                         unsigned char[::1] trainable, double[:, ::1] out):
    cdef Py_ssize_t n = starts.shape[0] - 1
    cdef Py_ssize_t n_hidden = len(weights) - 1
    cdef Py_ssize_t classes = dlogits.shape[1]

    # flat-layout offsets per trainable layer, ascending
    cdef long[::1] offsets = np.full(n_hidden + 1, -1, dtype=np.int64)
    cdef Py_ssize_t pos = 0, lowest = n_hidden + 1
    cdef Py_ssize_t l
    for l in range(n_hidden + 1):
        if trainable[l]:
            offsets[l] = pos
            pos += (<object> weights[l]).size + (<object> weights[l]).shape[1]
            if l < lowest:
                lowest = l
    assert pos == out.shape[1]

    cdef Py_ssize_t max_w = classes
    for l in range(len(acts)):
        if (<object> acts[l]).shape[1] > max_w:
            max_w = (<object> acts[l]).shape[1]
    cdef Py_ssize_t max_t = 0
    cdef Py_ssize_t i
    for i in range(n):
        if starts[i + 1] - starts[i] > max_t:
            max_t = starts[i + 1] - starts[i]

    cdef double[:, ::1] buf_a = np.empty((max(max_t, 1), max_w))
    cdef double[:, ::1] buf_b = np.empty((max(max_t, 1), max_w))
    cdef double[:, ::1] delta, nxt, W, A
    cdef Py_ssize_t s, e, t, j, k, o, din, dout, nt
    cdef int cur  # which buffer holds delta: 0 = buf_a, 1 = buf_b
    cdef double acc, v

    for i in range(n):
        s = starts[i]
        e = starts[i + 1]
        nt = e - s
        for j in range(out.shape[1]):
            out[i, j] = 0.0

        # output layer
        if offsets[n_hidden] >= 0:
            o = offsets[n_hidden]
            A = acts[n_hidden]
            din = A.shape[1]
            for t in range(nt):
                for j in range(din):
                    v = A[s + t, j]
                    for k in range(classes):
                        out[i, o + j * classes + k] += v * dlogits[s + t, k]
                for k in range(classes):
                    out[i, o + din * classes + k] += dlogits[s + t, k]

        if lowest > n_hidden:
            continue

        # seed delta with dlogits, then walk the hidden stack downward
        delta = buf_a
        cur = 0
        for t in range(nt):
            for k in range(classes):
                delta[t, k] = dlogits[s + t, k]
        dout = classes

        for l in range(n_hidden - 1, -1, -1):
            if l < lowest:
                break
            W = weights[l + 1]      # maps A_{l+1} -> next pre-activation
            A = acts[l + 1]
            din = W.shape[0]
            nxt = buf_b if cur == 0 else buf_a
            for t in range(nt):
                for j in range(din):
                    acc = 0.0
                    for k in range(dout):
                        acc += delta[t, k] * W[j, k]
                    v = A[s + t, j]
                    if act_codes[l] == 0:   # relu
                        nxt[t, j] = acc if v > 0.0 else 0.0
                    else:                    # tanh
                        nxt[t, j] = acc * (1.0 - v * v)
            delta = nxt
            cur = 1 - cur
            dout = din

            if offsets[l] >= 0:
                o = offsets[l]
                A = acts[l]
                din = A.shape[1]
                for t in range(nt):
                    for j in range(din):
                        v = A[s + t, j]
                        for k in range(dout):
                            out[i, o + j * dout + k] += v * delta[t, k]
                    for k in range(dout):
                        out[i, o + din * dout + k] += delta[t, k]
