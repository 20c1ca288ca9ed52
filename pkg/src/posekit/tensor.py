"""Dense tensors with reverse-mode automatic differentiation.

Small, numpy-backed, and deliberately eager: every operation computes its
result immediately and records a backward closure.  ``backward()`` on a
scalar walks the recorded graph once in reverse topological order, so the
gradient accumulation order is fixed by construction order and repeated runs
are bitwise reproducible.

Layout conventions: row-major buffers, channels-last images ``(B, H, W, C)``,
conv kernels ``(k, k, Cin, Cout)``, deconv kernels ``(k, k, Cout, Cin)``.

Float32 is the training dtype; gradient-check suites run everything in
float64 for headroom.
"""

from contextlib import contextmanager

import numpy as np
from scipy.special import erf as _erf

from . import kernels

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


class DimensionError(ValueError):
    """Operand shapes do not admit the requested operation."""


_grad_enabled = True
_check_finite = False
_mac_counter = None


@contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_check_finite(enabled):
    """Toggle NaN/Inf screening of every op result (checked mode)."""
    global _check_finite
    _check_finite = bool(enabled)


@contextmanager
def count_macs():
    """Count multiply-accumulate operations of matmul/conv ops in the block.

    Yields a single-element list; element 0 holds the running MAC total.
    Used by the cost-accounting tests to cross-check static counts against
    an instrumented forward pass.
    """
    global _mac_counter
    prev = _mac_counter
    _mac_counter = [0]
    try:
        yield _mac_counter
    finally:
        _mac_counter = prev


def _tally_macs(n):
    if _mac_counter is not None:
        _mac_counter[0] += int(n)


def _screen(data):
    if _check_finite and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values produced by an operation")
    return data


class Tensor:
    """A dense n-dimensional array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bw")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._bw = None

    # -- basic introspection ------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{flag})"

    # -- autodiff core ------------------------------------------------------
    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self):
        """Populate gradients of every reachable requires_grad tensor.

        Only valid on scalars (one-element tensors).
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar loss, got shape {self.data.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Parameter(Tensor):
    """A named, trainable tensor.

    Names are slash-separated paths assigned by the owning module tree and
    stay stable across checkpoint save/load.
    """

    __slots__ = ("name",)

    def __init__(self, data, name="", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name


def _lift(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _node(out_data, parents, bw):
    t = Tensor(_screen(out_data))
    if _grad_enabled and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t._parents = tuple(parents)
        t._bw = bw
    return t


def _unbroadcast(g, shape):
    """Sum g down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------

def add(a, b):
    b = _lift(b, a)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b):
    b = _lift(b, a)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), bw)


def neg(a):
    def bw(g):
        a._accumulate(-g)

    return _node(-a.data, (a,), bw)


def mul(a, b):
    b = _lift(b, a)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), bw)


def div(a, b):
    b = _lift(b, a)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(a.data / b.data, (a, b), bw)


def power(a, p):
    out = a.data ** p

    def bw(g):
        a._accumulate(g * p * a.data ** (p - 1))

    return _node(out, (a,), bw)


def exp(a):
    out = np.exp(a.data)

    def bw(g):
        a._accumulate(g * out)

    return _node(out, (a,), bw)


def log(a):
    def bw(g):
        a._accumulate(g / a.data)

    return _node(np.log(a.data), (a,), bw)


def sqrt(a):
    out = np.sqrt(a.data)

    def bw(g):
        a._accumulate(g * 0.5 / out)

    return _node(out, (a,), bw)


def tanh(a):
    out = np.tanh(a.data)

    def bw(g):
        a._accumulate(g * (1.0 - out * out))

    return _node(out, (a,), bw)


def sin(a):
    def bw(g):
        a._accumulate(g * np.cos(a.data))

    return _node(np.sin(a.data), (a,), bw)


def relu(a):
    mask = a.data > 0

    def bw(g):
        a._accumulate(g * mask)

    return _node(np.where(mask, a.data, 0.0), (a,), bw)


def gelu(a):
    """Exact Gaussian-error-linear unit x * Phi(x)."""
    x = a.data
    phi_cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    out = x * phi_cdf

    def bw(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        a._accumulate(g * (phi_cdf + x * pdf))

    return _node(out, (a,), bw)


def abs_(a):
    sign = np.sign(a.data)

    def bw(g):
        a._accumulate(g * sign)

    return _node(np.abs(a.data), (a,), bw)


# -- reductions -------------------------------------------------------------

def sum_(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _node(out, (a,), bw)


def mean(a, axis=None, keepdims=False):
    out = a.data.mean(axis=axis, keepdims=keepdims)
    denom = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape) / denom)

    return _node(out, (a,), bw)


def max_(a, axis, keepdims=False):
    out = a.data.max(axis=axis, keepdims=keepdims)
    expanded = out if keepdims else np.expand_dims(out, axis)
    mask = a.data == expanded
    counts = mask.sum(axis=axis, keepdims=True)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(mask * (g / counts))

    return _node(out, (a,), bw)


# -- shape manipulation -----------------------------------------------------

def reshape(a, shape):
    def bw(g):
        a._accumulate(g.reshape(a.shape))

    return _node(a.data.reshape(shape), (a,), bw)


def transpose(a, axes):
    inv = np.argsort(axes)

    def bw(g):
        a._accumulate(g.transpose(inv))

    return _node(np.ascontiguousarray(a.data.transpose(axes)), (a,), bw)


def concat(parts, axis):
    datas = [p.data for p in parts]
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                p._accumulate(g[tuple(idx)])

    return _node(np.concatenate(datas, axis=axis), tuple(parts), bw)


def slice_(a, key):
    """Basic indexing (slices / ints); gradient scatters into the slice."""
    out = a.data[key]

    def bw(g):
        gx = np.zeros_like(a.data)
        gx[key] = g
        a._accumulate(gx)

    return _node(out.copy(), (a,), bw)


def take(a, indices, axis):
    """Integer-array gather along one axis; backward scatter-adds."""
    idx = np.asarray(indices, dtype=np.int64)
    out = np.take(a.data, idx, axis=axis)

    def bw(g):
        gx = np.zeros_like(a.data)
        np.add.at(gx, (slice(None),) * axis + (idx,), g)
        a._accumulate(gx)

    return _node(out, (a,), bw)


def pad_hw(a, top, bottom, left, right):
    """Zero-pad axes 1 and 2 of a (B, H, W, C) tensor."""
    widths = ((0, 0), (top, bottom), (left, right), (0, 0))
    h, w = a.shape[1], a.shape[2]

    def bw(g):
        a._accumulate(g[:, top:top + h, left:left + w, :])

    return _node(np.pad(a.data, widths), (a,), bw)


# -- fused neural-net primitives ---------------------------------------------

def matmul(a, b):
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = a.data @ b.data
    batch = int(np.prod(out.shape[:-2], dtype=np.int64)) if out.ndim > 2 else 1
    _tally_macs(batch * out.shape[-2] * a.shape[-1] * out.shape[-1]
                if out.ndim >= 2 else a.data.size)

    def bw(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return _node(out, (a, b), bw)


def softmax_lastdim(a):
    """Numerically stabilized softmax over the last dimension."""
    if a.shape[-1] == 0:
        raise DimensionError(f"softmax over empty last dimension: {a.shape}")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        gy = out * g
        a._accumulate(gy - out * gy.sum(axis=-1, keepdims=True))

    return _node(out, (a,), bw)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last dimension to zero mean / unit variance, then affine."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} "
            f"do not match feature dim {c} of {x.shape}")
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, c).sum(axis=0))
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, c).sum(axis=0))
        if x.requires_grad:
            gy = g * gamma.data
            m1 = gy.mean(axis=-1, keepdims=True)
            m2 = (gy * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gy - m1 - xhat * m2))

    return _node(out, (x, gamma, beta), bw)


def conv2d(x, w, stride=1, pad=0):
    """Strided 2D cross-correlation, x (B,H,W,Cin), w (k,k,Cin,Cout)."""
    b, h, wd, cin = x.shape
    k = w.shape[0]
    if w.shape[2] != cin:
        raise DimensionError(
            f"conv2d channels disagree: input {x.shape}, kernel {w.shape}")
    ho = kernels.conv_out_dim(h, k, stride, pad)
    wo = kernels.conv_out_dim(wd, k, stride, pad)
    if ho < 1 or wo < 1:
        raise DimensionError(
            f"conv2d output extent {ho}x{wo} non-positive for input {x.shape}, "
            f"kernel {w.shape}, stride {stride}, pad {pad}")
    out = kernels.conv_fwd(x.data, w.data, stride, pad)
    cout = w.shape[3]
    _tally_macs(b * ho * wo * k * k * cin * cout)

    def bw(g):
        if x.requires_grad:
            x._accumulate(kernels.conv_gx(g, w.data, stride, pad, h, wd))
        if w.requires_grad:
            w._accumulate(kernels.conv_gw(x.data, g, k, stride, pad))

    return _node(out, (x, w), bw)


def deconv2d(x, w, stride=1, pad=0):
    """Transposed convolution, x (B,H,W,Cin), w (k,k,Cout,Cin).

    Output extent is (H-1)*stride - 2*pad + k.  Its input gradient is
    conv2d with the same kernel array, which is why deconv kernels store
    (Cout, Cin) in the trailing axes.
    """
    b, h, wd, cin = x.shape
    k, _, cout, cin_w = w.shape
    if cin_w != cin:
        raise DimensionError(
            f"deconv2d channels disagree: input {x.shape}, kernel {w.shape}")
    ho = (h - 1) * stride - 2 * pad + k
    wo = (wd - 1) * stride - 2 * pad + k
    if ho < 1 or wo < 1:
        raise DimensionError(
            f"deconv2d output extent {ho}x{wo} non-positive for input {x.shape}, "
            f"kernel {w.shape}, stride {stride}, pad {pad}")
    out = kernels.conv_gx(x.data, w.data.transpose(0, 1, 3, 2), stride, pad, ho, wo)
    _tally_macs(b * h * wd * k * k * cin * cout)

    def bw(g):
        if x.requires_grad:
            x._accumulate(kernels.conv_fwd(g, w.data.transpose(0, 1, 3, 2), stride, pad))
        if w.requires_grad:
            gw = kernels.conv_gw(g, x.data, k, stride, pad)
            w._accumulate(gw.transpose(0, 1, 3, 2))

    return _node(out, (x, w), bw)


def pixel_shuffle(a, r):
    """Channel-to-space upsample by factor r.

    Index law: out[x, y, c] = in[x // r, y // r, C*r*(y % r) + C*(x % r) + c]
    with x indexing the first spatial axis.  A pure permutation, hence
    bijective; the gradient is the inverse permutation.  Accepts (H, W, Cr2)
    or (B, H, W, Cr2).
    """
    if r < 1:
        raise ValueError("pixel_shuffle factor must be >= 1")
    batched = a.ndim == 4
    t = a if batched else reshape(a, (1,) + a.shape)
    b, h, w, cr2 = t.shape
    if cr2 % (r * r) != 0:
        raise DimensionError(
            f"pixel_shuffle needs channels divisible by r^2={r * r}, got {cr2}")
    c = cr2 // (r * r)
    # channel index decomposes as C*r*a + C*b + c -> (a, b, c); a pairs with
    # the second spatial axis, b with the first.
    t = reshape(t, (b, h, w, r, r, c))
    t = transpose(t, (0, 1, 4, 2, 3, 5))
    t = reshape(t, (b, h * r, w * r, c))
    return t if batched else reshape(t, (h * r, w * r, c))


__all__ = [
    "Tensor", "Parameter", "DimensionError", "no_grad", "set_check_finite",
    "count_macs", "add", "sub", "neg", "mul", "div", "power", "exp", "log",
    "sqrt", "tanh", "relu", "gelu", "abs_", "sum_", "mean", "max_", "reshape",
    "transpose", "concat", "slice_", "take", "pad_hw", "matmul",
    "softmax_lastdim", "layer_norm", "conv2d", "deconv2d", "pixel_shuffle",
]
