"""Pure-numpy per-example backward kernel (fallback backend).

Same contract as the compiled `_kernels` extension; selected at import time
by `dpdesk.backend` when the extension is unavailable or disabled.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _act_prime(code: int, a: np.ndarray) -> np.ndarray:
    # derivative expressed through the stored activation value
    if code == 0:  # relu
        return (a > 0.0).astype(np.float64)
    return 1.0 - a * a  # tanh


def backprop_per_example(acts, dlogits, starts, weights, act_codes, trainable, out):
    """Per-example gradients of a dense feed-forward head.

    acts: [A0, ..., A_L], activations for all tokens stacked (A0 is the
        frozen featurizer output).
    dlogits: (tokens, classes) loss gradient at the logits, already scaled
        per example.
    starts: (n+1,) token boundaries of the n examples.
    weights: [W_1, ..., W_L, W_out].
    act_codes: (L,) 0 = relu, 1 = tanh, for A_1..A_L.
    trainable: (L+1,) flags for hidden_1..hidden_L and the output layer.
    out: (n, P) preallocated; row i receives example i's gradient, layers in
        ascending order (each W row-major, then its bias). Token contributions
        accumulate in row order within each example.
    """
    n = len(starts) - 1
    n_hidden = len(weights) - 1
    classes = dlogits.shape[1]

    # flat-layout offsets for each trainable layer, ascending
    offsets = {}
    pos = 0
    for l in range(n_hidden):
        if trainable[l]:
            offsets[l] = pos
            pos += weights[l].size + weights[l].shape[1]
    if trainable[n_hidden]:
        offsets[n_hidden] = pos
        pos += weights[n_hidden].size + classes
    assert pos == out.shape[1]

    lowest = min(offsets) if offsets else n_hidden + 1

    for i in range(n):
        s, e = int(starts[i]), int(starts[i + 1])
        dz = dlogits[s:e]
        row = out[i]
        row[:] = 0.0
        if n_hidden in offsets:
            o = offsets[n_hidden]
            w = weights[n_hidden]
            row[o:o + w.size] = (acts[n_hidden][s:e].T @ dz).ravel()
            row[o + w.size:o + w.size + classes] = dz.sum(axis=0)
        delta = dz
        for l in range(n_hidden - 1, -1, -1):
            if l < lowest:
                break  # nothing trainable at this depth or below
            delta = (delta @ weights[l + 1].T) * _act_prime(act_codes[l], acts[l + 1][s:e])
            if l in offsets:
                o = offsets[l]
                w = weights[l]
                row[o:o + w.size] = (acts[l][s:e].T @ delta).ravel()
                row[o + w.size:o + w.size + w.shape[1]] = delta.sum(axis=0)
