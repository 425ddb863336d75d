"""Central finite-difference verification of analytic gradients.

The check runs in float64; callers construct their function over
float64 tensors so truncation error, not precision, dominates.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-3,
    max_coords: int | None = None,
    seed: int = 0,
    atol: float = 0.0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8); the
    analytic side comes from one backward pass of ``f(*inputs)``. By
    default every coordinate is perturbed; ``max_coords`` caps the
    number checked per tensor (a deterministic random subset) so large
    parameter tensors stay tractable. ``atol`` treats coordinates where
    analytic and numeric agree within that absolute margin as exact,
    which keeps structurally-zero gradients (masked by dropout or max
    pooling) from registering measurement noise as relative error.
    """
    inputs = list(inputs)
    for x in inputs:
        if x.data.dtype != np.float64:
            raise ValueError("grad_check requires float64 input tensors")
        x.zero_grad()
    out = f(*inputs)
    if out.data.ndim != 0:
        raise ValueError("grad_check requires a scalar-valued function")
    out.backward()
    analytic = [
        x.grad.copy() if x.grad is not None else np.zeros_like(x.data) for x in inputs
    ]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x, a in zip(inputs, analytic):
        if not x.requires_grad:
            continue
        flat = x.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        a_flat = a.reshape(-1)
        for j in coords:
            orig = flat[j]
            flat[j] = orig + h
            up = f(*inputs).item()
            flat[j] = orig - h
            down = f(*inputs).item()
            flat[j] = orig
            numeric = (up - down) / (2.0 * h)
            a_j = float(a_flat[j])
            if abs(a_j - numeric) <= atol:
                continue
            err = abs(a_j - numeric) / max(abs(a_j), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
