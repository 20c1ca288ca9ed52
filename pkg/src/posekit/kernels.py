"""Vectorized convolution kernels, channels-last.

Images are ``(B, H, W, C)``; conv kernels ``(k, k, Cin, Cout)``.  All three
entry points share the cross-correlation index law

    y[b,i,j,co] = sum_{p,q,ci} x[b, i*s+p-pad, j*s+q-pad, ci] * w[p,q,ci,co]

computed tap-by-tap as k*k BLAS matmuls over strided views, which avoids
materializing an im2col matrix.  Transposed convolution and its gradients
are composed from these in :mod:`posekit.tensor`.
"""

import numpy as np


def conv_out_dim(size, k, stride, pad):
    """Output extent of a strided cross-correlation along one axis."""
    return (size + 2 * pad - k) // stride + 1


def _pad2d(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))


def conv_fwd(x, w, stride, pad):
    """Strided 2D cross-correlation."""
    k = w.shape[0]
    b, h, wd, cin = x.shape
    cout = w.shape[3]
    xp = _pad2d(x, pad)
    ho = conv_out_dim(h, k, stride, pad)
    wo = conv_out_dim(wd, k, stride, pad)
    y = np.zeros((b * ho * wo, cout), dtype=x.dtype)
    for p in range(k):
        for q in range(k):
            xs = xp[:, p : p + (ho - 1) * stride + 1 : stride,
                    q : q + (wo - 1) * stride + 1 : stride, :]
            y += np.ascontiguousarray(xs).reshape(-1, cin) @ w[p, q]
    return y.reshape(b, ho, wo, cout)


def conv_gw(x, g, k, stride, pad):
    """Gradient of conv_fwd w.r.t. the kernel."""
    b, h, wd, cin = x.shape
    ho, wo, cout = g.shape[1], g.shape[2], g.shape[3]
    xp = _pad2d(x, pad)
    g2 = g.reshape(-1, cout)
    gw = np.empty((k, k, cin, cout), dtype=x.dtype)
    for p in range(k):
        for q in range(k):
            xs = xp[:, p : p + (ho - 1) * stride + 1 : stride,
                    q : q + (wo - 1) * stride + 1 : stride, :]
            gw[p, q] = np.ascontiguousarray(xs).reshape(-1, cin).T @ g2
    return gw


def conv_gx(g, w, stride, pad, height, width):
    """Gradient of conv_fwd w.r.t. the input (also the deconvolution core).

    Scatter-adds each tap's contribution back through the same strided views
    the forward pass read from.
    """
    b, ho, wo, cout = g.shape
    k = w.shape[0]
    cin = w.shape[2]
    hp, wp = height + 2 * pad, width + 2 * pad
    gxp = np.zeros((b, hp, wp, cin), dtype=g.dtype)
    g2 = g.reshape(-1, cout)
    for p in range(k):
        for q in range(k):
            contrib = g2 @ w[p, q].T
            gxp[:, p : p + (ho - 1) * stride + 1 : stride,
                q : q + (wo - 1) * stride + 1 : stride, :] += contrib.reshape(b, ho, wo, cin)
    if pad == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, pad : pad + height, pad : pad + width])
