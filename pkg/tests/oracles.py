"""Independent brute-force references used as test oracles.

Everything here is written as plain loops over definitions, deliberately
ignoring how the package computes the same quantities.
"""

import numpy as np


def conv2d_ref(x, w, stride, pad):
    """Direct-definition strided cross-correlation, channels-last."""
    b, h, wd, cin = x.shape
    k = w.shape[0]
    cout = w.shape[3]
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    y = np.zeros((b, ho, wo, cout), dtype=x.dtype)
    for n in range(b):
        for i in range(ho):
            for j in range(wo):
                for p in range(k):
                    u = i * stride + p - pad
                    if not (0 <= u < h):
                        continue
                    for q in range(k):
                        v = j * stride + q - pad
                        if not (0 <= v < wd):
                            continue
                        y[n, i, j] += x[n, u, v] @ w[p, q]
    return y


def deconv2d_ref(x, w, stride, pad):
    """Direct-definition transposed convolution, kernel (k,k,Cout,Cin)."""
    b, h, wd, cin = x.shape
    k = w.shape[0]
    cout = w.shape[2]
    ho = (h - 1) * stride - 2 * pad + k
    wo = (wd - 1) * stride - 2 * pad + k
    y = np.zeros((b, ho, wo, cout), dtype=x.dtype)
    for n in range(b):
        for i in range(h):
            for j in range(wd):
                for p in range(k):
                    u = i * stride + p - pad
                    if not (0 <= u < ho):
                        continue
                    for q in range(k):
                        v = j * stride + q - pad
                        if not (0 <= v < wo):
                            continue
                        y[n, u, v] += w[p, q] @ x[n, i, j]
    return y


def pixel_shuffle_ref(lr, r):
    """Gather implementation of the channel-to-space index law."""
    h, w, cr2 = lr.shape
    c = cr2 // (r * r)
    hr = np.empty((h * r, w * r, c), dtype=lr.dtype)
    for x in range(h * r):
        for y in range(w * r):
            for ch in range(c):
                q = c * r * (y % r) + c * (x % r) + ch
                hr[x, y, ch] = lr[x // r, y // r, q]
    return hr


def oks_ref(pred, gt, vis, scale, falloff):
    """Object keypoint similarity straight from the definition."""
    num = 0.0
    den = 0
    for i in range(len(gt)):
        if vis[i] > 0:
            d2 = (pred[i][0] - gt[i][0]) ** 2 + (pred[i][1] - gt[i][1]) ** 2
            num += np.exp(-d2 / (2.0 * scale ** 2 * falloff[i] ** 2))
            den += 1
    if den == 0:
        raise ValueError("no visible joints")
    return num / den


def map_ref(oks_values, thresholds):
    """Mean over thresholds of the fraction of instances at or above each."""
    precisions = []
    for t in thresholds:
        hits = sum(1 for v in oks_values if v >= t)
        precisions.append(hits / len(oks_values))
    return sum(precisions) / len(precisions)


def pckh_ref(pred, gt, head_len, annotated):
    """Fraction of annotated joints within half the head segment length."""
    correct = 0
    total = 0
    for i in range(len(gt)):
        if not annotated[i]:
            continue
        total += 1
        d = np.hypot(pred[i][0] - gt[i][0], pred[i][1] - gt[i][1])
        if d <= 0.5 * head_len:
            correct += 1
    return correct / total if total else 0.0
