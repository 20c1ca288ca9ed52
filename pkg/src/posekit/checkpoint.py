"""Single-file checkpoint container.

Byte-exact layout:

* header line:   ``POSEKIT-CKPT 1\n``
* count line:    ``tensors <N>\n``
* N manifest lines, each ``<name> <dtype> <dims> <offset>\n`` where
  ``<dtype>`` is the numpy dtype string (little-endian, e.g. ``<f4``),
  ``<dims>`` is comma-joined (``64,48,3``; ``1`` for scalars stored as
  length-1 vectors), and ``<offset>`` is the byte offset of the buffer
  inside the data section;
* one blank line;
* the data section: the raw little-endian buffers, back to back, at the
  stated offsets.

Names are slash-separated paths and must not contain whitespace.  Model
parameters live under ``model/``; optimizer and bookkeeping state under
``opt/`` and ``extra/``.
"""

import numpy as np

MAGIC = "POSEKIT-CKPT 1"


def save_arrays(path, arrays):
    """Write a name->ndarray mapping; iteration order fixes buffer order."""
    items = []
    offset = 0
    for name, arr in arrays.items():
        if any(ch.isspace() for ch in name):
            raise ValueError(f"checkpoint name contains whitespace: {name!r}")
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        items.append((name, le, offset))
        offset += le.nbytes
    lines = [MAGIC, f"tensors {len(items)}"]
    for name, arr, off in items:
        dims = ",".join(str(d) for d in (arr.shape or (1,)))
        lines.append(f"{name} {arr.dtype.str} {dims} {off}")
    header = ("\n".join(lines) + "\n\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        for _, arr, _ in items:
            fh.write(arr.reshape(-1).tobytes())


def load_arrays(path):
    """Read a checkpoint back into an ordered name->ndarray dict."""
    with open(path, "rb") as fh:
        raw = fh.read()
    split = raw.index(b"\n\n")
    header = raw[:split].decode("ascii").split("\n")
    data = raw[split + 2:]
    if header[0] != MAGIC:
        raise ValueError(f"not a posekit checkpoint: header {header[0]!r}")
    n = int(header[1].split()[1])
    out = {}
    for line in header[2:2 + n]:
        name, dtype, dims, off = line.split()
        shape = tuple(int(d) for d in dims.split(","))
        dt = np.dtype(dtype)
        count = int(np.prod(shape))
        off = int(off)
        buf = np.frombuffer(data, dtype=dt, count=count, offset=off)
        out[name] = buf.reshape(shape).copy()
    return out


def save_model(path, model, extra=None):
    """Checkpoint a module's parameters (plus optional extra arrays)."""
    arrays = {f"model/{k}": v for k, v in model.state_dict().items()}
    for mod_name, buf_name, buf in _norm_buffers(model):
        arrays[f"model/{mod_name}{buf_name}"] = buf
    if extra:
        arrays.update(extra)
    save_arrays(path, arrays)


def load_model(path, model):
    """Restore parameters (and norm buffers) in place; returns the rest."""
    arrays = load_arrays(path)
    state = {k[len("model/"):]: v for k, v in arrays.items()
             if k.startswith("model/")}
    buffers = {}
    for mod_name, buf_name, buf in _norm_buffers(model):
        key = f"{mod_name}{buf_name}"
        if key in state:
            buffers[key] = state.pop(key)
    model.load_state_dict(state)
    for mod_name, buf_name, buf in _norm_buffers(model):
        key = f"{mod_name}{buf_name}"
        if key in buffers:
            buf[...] = buffers[key].astype(buf.dtype)
    return {k: v for k, v in arrays.items() if not k.startswith("model/")}


def _norm_buffers(model):
    """Yield (module_path_prefix, buffer_name, array) for running stats."""
    for prefix, mod in _walk(model, ""):
        if hasattr(mod, "running_mean"):
            yield prefix, "running_mean", mod.running_mean
            yield prefix, "running_var", mod.running_var


def _walk(module, prefix):
    yield prefix, module
    for key, val in vars(module).items():
        from .nn import Module
        if isinstance(val, Module):
            yield from _walk(val, f"{prefix}{key}/")
        elif isinstance(val, (list, tuple)):
            for i, item in enumerate(val):
                if isinstance(item, Module):
                    yield from _walk(item, f"{prefix}{key}{i}/")


__all__ = ["save_arrays", "load_arrays", "save_model", "load_model", "MAGIC"]
