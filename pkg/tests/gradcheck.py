"""Central finite-difference gradient oracle used across module tests.

Independent of autograd: perturbs chosen parameter coordinates, re-runs the
forward closure, and compares the two-sided difference quotient against the
autograd gradient at 64-bit precision.
"""

import numpy as np
import torch


def randomize_(module: torch.nn.Module, scale: float = 0.05, seed: int = 0) -> None:
    """Move all parameters to a generic point (zero-initialized heads included)."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.add_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * scale)


def fd_gradient_check(
    loss_fn,
    params,
    n_coords: int = 10,
    eps: float = 1e-6,
    rtol: float = 1e-4,
    seed: int = 0,
):
    """Compare autograd gradients with central finite differences.

    ``loss_fn`` must recompute the scalar loss from the live parameter
    tensors on every call. Coordinates whose gradient is numerically zero on
    both routes are accepted as agreeing.
    """
    params = [p for p in params if p.requires_grad]
    assert params, "no parameters to check"
    assert all(p.dtype == torch.float64 for p in params), "gradient check needs float64"

    loss = loss_fn()
    grads = torch.autograd.grad(loss, params)

    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)

    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    for flat_idx in picks:
        pi = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        j = int(flat_idx - offsets[pi])
        p = params[pi]
        with torch.no_grad():
            orig = p.view(-1)[j].item()
            h = eps * max(1.0, abs(orig))
            p.view(-1)[j] = orig + h
            plus = float(loss_fn())
            p.view(-1)[j] = orig - h
            minus = float(loss_fn())
            p.view(-1)[j] = orig
        fd = (plus - minus) / (2.0 * h)
        ag = float(grads[pi].view(-1)[j])
        denom = max(abs(fd), abs(ag))
        if denom < 1e-7:
            continue  # both routes see (numerically) zero slope
        rel = abs(fd - ag) / denom
        worst = max(worst, rel)
        assert rel < rtol, (
            f"param {pi} coord {j}: autograd {ag:.6e} vs finite-diff {fd:.6e} "
            f"(rel err {rel:.3e})"
        )
    return worst
