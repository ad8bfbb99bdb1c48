"""Central finite-difference check of autograd gradients."""

from __future__ import annotations

from typing import Callable, Iterable

import torch


def finite_difference_errors(
    loss_fn: Callable[[], torch.Tensor],
    params: Iterable[tuple[str, torch.Tensor]],
    eps: float = 1e-4,
    floor: float = 1e-8,
) -> dict[str, float]:
    """Relative error per tensor, ``|g_fd - g_ad| / max(|g_fd|, |g_ad|, floor)`` in L2 norm.

    ``loss_fn`` must be deterministic and the tensors float64 leaves. A step of
    1e-4 keeps roundoff below truncation error for the tiny models checked here.
    """
    params = list(params)
    for _, p in params:
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, [p for _, p in params], allow_unused=True)
    errors = {}
    with torch.no_grad():
        for (name, p), g in zip(params, grads):
            g = torch.zeros_like(p) if g is None else g
            fd = torch.zeros_like(p)
            flat, fd_flat = p.view(-1), fd.view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + eps
                up = float(loss_fn())
                flat[i] = orig - eps
                down = float(loss_fn())
                flat[i] = orig
                fd_flat[i] = (up - down) / (2 * eps)
            denom = max(float(fd.norm()), float(g.norm()), floor)
            errors[name] = float((fd - g).norm()) / denom
    return errors
