"""Reverse-mode per-example gradients with softmax cross-entropy loss.

An "example" is a contiguous block of featurized rows: one row for
classification, one row per token for tagging. Each example's loss is the
mean cross-entropy over its rows, and its gradient covers trainable
parameter groups only, flattened in group declaration order (matching
`models.flatten_trainable`).

Dense heads dispatch to the selected kernel backend; models with a
recurrent aggregation layer use the pure-python BPTT path below.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .models import FreezeMask, Model, forward_activations


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _prepare(X, labels, starts):
    X = np.ascontiguousarray(X, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    if len(labels) != X.shape[0] or starts[-1] != X.shape[0]:
        raise ValueError("labels/starts do not match the feature rows")
    return X, labels, starts


def per_example_grads(model: Model, mask: FreezeMask, X, labels, starts,
                      loss_scale: float = 1.0):
    """Gradients of every example's loss over the trainable groups.

    X: (tokens, dim) featurized rows; labels: (tokens,) gold class indices;
    starts: (n+1,) example boundaries. Returns (G, losses) with G of shape
    (n, trainable size).
    """
    X, labels, starts = _prepare(X, labels, starts)
    n = len(starts) - 1
    if n == 0:
        raise ValueError("empty batch")
    counts = np.diff(starts)
    if np.any(counts <= 0):
        raise ValueError("every example needs at least one row")

    if model.spec.recurrent_width > 0:
        return _per_example_grads_recurrent(model, mask, X, labels, starts, loss_scale)

    acts = forward_activations(model, X)
    logits = acts[-1]
    p = softmax(logits)
    tok_nll = -np.log(p[np.arange(len(labels)), labels])
    losses = loss_scale * np.add.reduceat(tok_nll, starts[:-1]) / counts

    dz = p.copy()
    dz[np.arange(len(labels)), labels] -= 1.0
    dz *= (loss_scale / np.repeat(counts, counts))[:, None]

    n_hidden = len(model.spec.hidden)
    weights = [model.group(f"hidden_{i}").arrays[0] for i in range(1, n_hidden + 1)]
    weights.append(model.group("output").arrays[0])
    act_codes = np.array(
        [0 if a == "relu" else 1 for _, a in model.spec.hidden], dtype=np.int64
    )
    names = [g.name for g in model.groups]
    flags = dict(zip(names, mask.trainable))
    trainable = np.array(
        [flags[f"hidden_{i}"] for i in range(1, n_hidden + 1)] + [flags["output"]],
        dtype=np.uint8,
    )
    G = np.empty((n, mask.trainable_size(model)))
    backend.backprop_per_example(
        [np.ascontiguousarray(a) for a in acts[:-1]],
        np.ascontiguousarray(dz), starts, weights, act_codes, trainable, G,
    )
    return G, losses


def _per_example_grads_recurrent(model, mask, X, labels, starts, loss_scale):
    """BPTT path for models with the recurrent aggregation layer."""
    names = [g.name for g in model.groups]
    flags = dict(zip(names, mask.trainable))
    n_hidden = len(model.spec.hidden)
    Wx, Wh, br = model.group("recurrent").arrays
    Wo, _bo = model.group("output").arrays

    n = len(starts) - 1
    P = mask.trainable_size(model)
    G = np.zeros((n, P))
    losses = np.empty(n)

    for i in range(n):
        s, e = int(starts[i]), int(starts[i + 1])
        acts = forward_activations(model, X[s:e])
        logits, states, feats = acts[-1], acts[-2], acts[:-2]
        y = labels[s:e]
        nt = e - s
        p = softmax(logits)
        losses[i] = loss_scale * float(np.mean(-np.log(p[np.arange(nt), y])))
        dz = p
        dz[np.arange(nt), y] -= 1.0
        dz *= loss_scale / nt

        grads = {}
        if flags["output"]:
            grads["output"] = [states.T @ dz, dz.sum(axis=0)]
        dstates = dz @ Wo.T

        gWx = np.zeros_like(Wx)
        gWh = np.zeros_like(Wh)
        gbr = np.zeros_like(br)
        dx = np.zeros((nt, Wx.shape[0]))
        carry = np.zeros(Wh.shape[0])
        for t in range(nt - 1, -1, -1):
            ds = (dstates[t] + carry) * (1.0 - states[t] ** 2)
            gWx += np.outer(feats[-1][t], ds)
            hprev = states[t - 1] if t > 0 else np.zeros(Wh.shape[0])
            gWh += np.outer(hprev, ds)
            gbr += ds
            dx[t] = ds @ Wx.T
            carry = ds @ Wh.T
        if flags["recurrent"]:
            grads["recurrent"] = [gWx, gWh, gbr]

        delta = dx
        for l in range(n_hidden, 0, -1):
            actname = model.spec.hidden[l - 1][1]
            a = feats[l]
            delta = delta * ((a > 0.0) if actname == "relu" else (1.0 - a * a))
            if flags[f"hidden_{l}"]:
                grads[f"hidden_{l}"] = [feats[l - 1].T @ delta, delta.sum(axis=0)]
            if any(flags[f"hidden_{j}"] for j in range(1, l)):
                delta = delta @ model.group(f"hidden_{l}").arrays[0].T
            else:
                break

        pos = 0
        for gi in mask.trainable_indices(model):
            for j, a in enumerate(model.groups[gi].arrays):
                G[i, pos:pos + a.size] = grads[model.groups[gi].name][j].ravel()
                pos += a.size
    return G, losses


def batch_grad(model: Model, mask: FreezeMask, X, labels, starts):
    """Gradient of the mean per-example loss (plain SGD path)."""
    G, losses = per_example_grads(model, mask, X, labels, starts)
    return G.mean(axis=0), float(losses.mean())
