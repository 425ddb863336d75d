"""Adam with bias correction and decoupled weight decay.

Large 2-d parameters (embedding tables) take a row-sparse fast path:
rows whose gradient has always been zero provably have zero moments and
zero update, so only ever-touched rows are visited. The results are
bit-identical to the dense update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

_SPARSE_ROW_THRESHOLD = 512


@dataclass
class AdamState:
    """Per-parameter-list optimizer state; moments match parameter shapes."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    active_rows: list[np.ndarray | None] = field(default_factory=list)


def _wants_sparse_rows(p: Tensor) -> bool:
    return p.data.ndim == 2 and p.data.shape[0] >= _SPARSE_ROW_THRESHOLD


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState) -> AdamState:
    """One Adam update, in place on ``params``.

    Weight decay is decoupled: p <- p - lr*wd*p before the moment update.
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p.data, dtype=np.float64) for p in params]
        state.v = [np.zeros_like(p.data, dtype=np.float64) for p in params]
        state.active_rows = [
            np.zeros(p.data.shape[0], dtype=bool) if _wants_sparse_rows(p) else None
            for p in params
        ]
    if len(state.m) != len(params):
        raise ValueError("optimizer state tracks a different parameter list")
    for p, g, m in zip(params, grads, state.m):
        if p.data.shape != np.shape(g) or m.shape != p.data.shape:
            raise ValueError(f"gradient/state shape mismatch for param of shape {p.data.shape}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if state.weight_decay:
            p.data -= (state.lr * state.weight_decay * p.data).astype(p.data.dtype)
        rows = state.active_rows[i]
        if rows is not None:
            rows |= np.any(np.asarray(g) != 0, axis=1)
            idx = np.nonzero(rows)[0]
            if idx.size == 0:
                continue
            g64 = np.asarray(g, dtype=np.float64)[idx]
            state.m[i][idx] = state.beta1 * state.m[i][idx] + (1.0 - state.beta1) * g64
            state.v[i][idx] = state.beta2 * state.v[i][idx] + (1.0 - state.beta2) * (g64 * g64)
            m_hat = state.m[i][idx] / bc1
            v_hat = state.v[i][idx] / bc2
            p.data[idx] -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)
        else:
            g64 = np.asarray(g, dtype=np.float64)
            state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g64
            state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g64 * g64)
            m_hat = state.m[i] / bc1
            v_hat = state.v[i] / bc2
            p.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)
    return state
