"""Central finite-difference validation of analytic gradients."""

import numpy as np

from .tensor import no_grad


def finite_diff_check(f, params, eps=1e-5, samples_per_param=None, rng=None):
    """Compare analytic gradients of ``f`` against central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor, closing over
    ``params`` (a list of Parameters).  Relative error uses the denominator
    ``max(|analytic|, |numeric|, 1e-12)``.  Returns a list of rows, one per
    parameter: ``(name, coords_checked, max_rel_err)``.

    Raises ValueError if ``f`` is non-deterministic (two evaluations differ)
    or eps is outside [1e-7, 1e-3].
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"eps {eps} outside [1e-7, 1e-3]")
    if rng is None:
        rng = np.random.default_rng(0)

    v1 = f()
    v2 = f()
    if v1.data != v2.data:
        raise ValueError("f is non-deterministic: two evaluations differ")

    for p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    rows = []
    for p, ga in zip(params, analytic):
        n = p.data.size
        if samples_per_param is None or samples_per_param >= n:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=samples_per_param, replace=False)
        flat = p.data.reshape(-1)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            with no_grad():
                flat[c] = orig + eps
                up = f().item()
                flat[c] = orig - eps
                down = f().item()
            flat[c] = orig
            numeric = (up - down) / (2.0 * eps)
            a = float(ga.reshape(-1)[c])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, rel)
        rows.append((p.name or "<unnamed>", len(coords), worst))
    return rows


def sampled_coordinate_check(f, params, n_samples=200, eps=1e-5, rng=None):
    """Relative errors at ``n_samples`` coordinates drawn across all params.

    Returns the array of per-coordinate relative errors, for
    fraction-passing style assertions.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    sizes = np.array([p.data.size for p in params])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(n_samples, total), replace=False)
    bounds = np.cumsum(sizes)
    errs = []
    for flat_idx in picks:
        pi = int(np.searchsorted(bounds, flat_idx, side="right"))
        c = int(flat_idx - (bounds[pi - 1] if pi else 0))
        p = params[pi]
        ga = 0.0 if p.grad is None else float(p.grad.reshape(-1)[c])
        flat = p.data.reshape(-1)
        orig = flat[c]
        with no_grad():
            flat[c] = orig + eps
            up = f().item()
            flat[c] = orig - eps
            down = f().item()
        flat[c] = orig
        numeric = (up - down) / (2.0 * eps)
        errs.append(abs(ga - numeric) / max(abs(ga), abs(numeric), 1e-12))
    return np.array(errs)


def format_report(rows):
    """Render finite_diff_check rows as an aligned text table."""
    width = max((len(r[0]) for r in rows), default=4)
    lines = [f"{'parameter':<{width}}  checked  max_rel_err"]
    for name, n, err in rows:
        lines.append(f"{name:<{width}}  {n:7d}  {err:.3e}")
    return "\n".join(lines)


def params_of(module):
    """Convenience: the Parameter list of a posekit.nn.Module."""
    return [p for _, p in module.named_parameters()]


__all__ = ["finite_diff_check", "sampled_coordinate_check", "format_report",
           "params_of"]
