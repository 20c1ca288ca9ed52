"""Layer building blocks on top of the tensor engine.

Modules own Parameters; ``named_parameters`` walks the attribute tree and
assigns stable slash-separated names (``block0/attn/wq``), which is also the
checkpoint naming scheme.  A module instance is confined to one thread
during forward/backward.
"""

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


class Module:
    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}" if prefix else key
            if isinstance(val, Parameter):
                val.name = name
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(prefix=name + "/")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{name}{i}/")
                    elif isinstance(item, Parameter):
                        item.name = f"{name}{i}"
                        yield f"{name}{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def param_count(self):
        return sum(p.data.size for p in self.parameters())

    def modules(self):
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.modules()

    def set_training(self, training):
        """Toggle train/eval behaviour (batch-norm statistics)."""
        for m in self.modules():
            if hasattr(m, "training"):
                m.training = training

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing}, unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise T.DimensionError(
                    f"parameter {name}: checkpoint shape {arr.shape} "
                    f"!= model shape {p.data.shape}")
            p.data = arr.astype(p.data.dtype)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def trunc_normal(rng, shape, std=0.02, dtype=np.float32):
    """Normal init clipped to +-2 std, the usual transformer weight init."""
    return np.clip(rng.standard_normal(shape) * std, -2 * std, 2 * std).astype(dtype)


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, bias=True, dtype=np.float32, std=0.02):
        self.w = Parameter(trunc_normal(rng, (in_dim, out_dim), std, dtype))
        self.b = Parameter(np.zeros(out_dim, dtype=dtype)) if bias else None

    def forward(self, x):
        y = T.matmul(x, self.w)
        return y + self.b if self.b is not None else y


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float32, eps=1e-5):
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def forward(self, x):
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Mlp(Module):
    """Two-layer GELU MLP with an expansion ratio, the transformer FFN."""

    def __init__(self, dim, hidden, rng, dtype=np.float32):
        self.fc1 = Linear(dim, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, dim, rng, dtype=dtype)

    def forward(self, x):
        return self.fc2(T.gelu(self.fc1(x)))


class Conv2d(Module):
    def __init__(self, cin, cout, k, rng, stride=1, pad=0, bias=True,
                 dtype=np.float32):
        fan_in = k * k * cin
        self.w = Parameter((rng.standard_normal((k, k, cin, cout))
                            * np.sqrt(2.0 / fan_in)).astype(dtype))
        self.b = Parameter(np.zeros(cout, dtype=dtype)) if bias else None
        self.stride = stride
        self.pad = pad

    def forward(self, x):
        y = T.conv2d(x, self.w, self.stride, self.pad)
        return y + self.b if self.b is not None else y


class Deconv2d(Module):
    def __init__(self, cin, cout, k, rng, stride=1, pad=0, bias=True,
                 dtype=np.float32):
        fan_in = k * k * cin
        self.w = Parameter((rng.standard_normal((k, k, cout, cin))
                            * np.sqrt(2.0 / fan_in)).astype(dtype))
        self.b = Parameter(np.zeros(cout, dtype=dtype)) if bias else None
        self.stride = stride
        self.pad = pad

    def forward(self, x):
        y = T.deconv2d(x, self.w, self.stride, self.pad)
        return y + self.b if self.b is not None else y


class BatchNorm2d(Module):
    """Channel-wise batch normalization for (B, H, W, C) tensors.

    Batch statistics during training, running averages (momentum 0.1) for
    evaluation.  Running buffers are plain arrays, not Parameters, and are
    saved alongside parameters by the checkpoint writer.
    """

    def __init__(self, dim, dtype=np.float32, momentum=0.1, eps=1e-5):
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))
        self.running_mean = np.zeros(dim, dtype=dtype)
        self.running_var = np.ones(dim, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.training = True

    def forward(self, x):
        if self.training:
            mu = T.mean(x, axis=(0, 1, 2))
            xc = x - T.reshape(mu, (1, 1, 1, -1))
            var = T.mean(xc * xc, axis=(0, 1, 2))
            self.running_mean = ((1 - self.momentum) * self.running_mean
                                 + self.momentum * mu.data)
            self.running_var = ((1 - self.momentum) * self.running_var
                                + self.momentum * var.data)
            inv = T.power(T.reshape(var, (1, 1, 1, -1)) + self.eps, -0.5)
            xhat = xc * inv
        else:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) * Tensor(inv.astype(x.dtype))
        return xhat * self.gamma + self.beta


class MultiHeadAttention(Module):
    """Multi-head scaled dot-product attention over (B, T, C) queries.

    Cross-attention when ``kv`` differs from the query stream.  Scale is
    1/sqrt(head_dim).  ``out_proj=False`` yields the bare concat of heads.
    Returns (output, attention) where attention is (B, M, Tq, Tk).
    """

    def __init__(self, dim, heads, rng, out_proj=True, dtype=np.float32):
        if dim % heads:
            raise T.DimensionError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.wq = Linear(dim, dim, rng, dtype=dtype)
        self.wk = Linear(dim, dim, rng, dtype=dtype)
        self.wv = Linear(dim, dim, rng, dtype=dtype)
        self.wo = Linear(dim, dim, rng, dtype=dtype) if out_proj else None

    def forward(self, q, kv=None):
        kv = q if kv is None else kv
        out, attn, _ = self.attend(q, kv)
        return out, attn

    def attend(self, q_in, kv_in):
        """Full attention; also returns per-head values for callers that
        need them (importance scoring and refinement)."""
        b, tq, c = q_in.shape
        tk = kv_in.shape[1]
        m = self.heads
        hd = c // m
        q = split_heads(self.wq(q_in), m)
        k = split_heads(self.wk(kv_in), m)
        v = split_heads(self.wv(kv_in), m)
        attn = T.softmax_lastdim(
            T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(hd)))
        out = merge_heads(T.matmul(attn, v))
        if self.wo is not None:
            out = self.wo(out)
        return out, attn, v


def split_heads(x, m):
    """(B, T, C) -> (B, M, T, C/M)."""
    b, t, c = x.shape
    return T.transpose(T.reshape(x, (b, t, m, c // m)), (0, 2, 1, 3))


def merge_heads(x):
    """(B, M, T, C/M) -> (B, T, C)."""
    b, m, t, hd = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, t, m * hd))


__all__ = ["Module", "Linear", "LayerNorm", "Mlp", "Conv2d", "Deconv2d",
           "BatchNorm2d", "MultiHeadAttention", "split_heads", "merge_heads",
           "trunc_normal"]
