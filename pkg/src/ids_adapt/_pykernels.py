"""Pure-numpy fallback for the compiled kernels.

Sums are accumulated one input column at a time, never through BLAS, so the
result does not depend on matrix width or blocking. That is what makes a
structurally pruned network agree bit-for-bit with its zeroed-out parent.
"""

import numpy as np


def dense_forward(x, weights, biases):
    cur = np.ascontiguousarray(x, dtype=np.float64)
    last = len(weights) - 1
    for layer, (w, b) in enumerate(zip(weights, biases)):
        out = np.empty((cur.shape[0], w.shape[1]), dtype=np.float64)
        out[:] = b
        for k in range(w.shape[0]):
            out += cur[:, k : k + 1] * w[k]
        if layer < last:
            np.tanh(out, out=out)
        cur = out
    return cur[:, 0].copy()


def weighted_draws(weights, k, uniforms):
    w0 = np.ascontiguousarray(weights, dtype=np.float64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    out = np.empty((uniforms.shape[0], k), dtype=np.int64)
    for r in range(uniforms.shape[0]):
        w = w0.copy()
        for step in range(k):
            # cumsum is a sequential scan, matching the compiled running total
            cum = np.cumsum(w)
            target = uniforms[r, step] * cum[-1]
            pick = int(np.searchsorted(cum, target, side="right"))
            if pick >= w.shape[0]:
                pick = int(np.flatnonzero(w > 0.0)[-1])
            out[r, step] = pick
            w[pick] = 0.0
    return out
