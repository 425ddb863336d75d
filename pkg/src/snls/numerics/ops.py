"""Forward + backward definitions for the fixed op set.

Every op computes in the dtype of its tensor inputs (float32 for
training, float64 for the finite-difference verification path) and
registers an explicit backward closure. No op mutates its inputs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NumericGuardError
from .tensor import Tensor, make_result


# --------------------------------------------------------------------------
# convolution
# --------------------------------------------------------------------------

def reflect_pad_indices(length: int, pad: int) -> np.ndarray:
    """Source indices realizing reflect padding without edge repetition.

    [1,2,3] padded by 1 reads positions [1,0,1,2,1] i.e. values [2,1,2,3,2].
    """
    if pad == 0:
        return np.arange(length)
    if length < pad + 1:
        raise ValueError(f"sequence of length {length} too short for reflect pad {pad}")
    left = np.arange(pad, 0, -1)
    right = np.arange(length - 2, length - 2 - pad, -1)
    return np.concatenate([left, np.arange(length), right])


def conv1d(x: Tensor, w: Tensor, b: Tensor, padding: str = "reflect") -> Tensor:
    """Cross-correlation along time: [B,C,T] * [O,C,K] + [O] -> [B,O,T].

    Reflect padding keeps the output time length equal to the input's.
    """
    if padding != "reflect":
        raise ValueError(f"unsupported padding mode: {padding!r}")
    if x.data.ndim != 3 or w.data.ndim != 3 or b.data.ndim != 1:
        raise ValueError("conv1d expects x[B,C,T], w[O,C,K], b[O]")
    batch, c_in, t = x.data.shape
    c_out, c_in_w, k = w.data.shape
    if c_in != c_in_w or b.data.shape[0] != c_out:
        raise ValueError(
            f"conv1d shape mismatch: x has {c_in} channels, w expects {c_in_w}; "
            f"w has {c_out} filters, b has {b.data.shape[0]}"
        )
    if k % 2 != 1:
        raise ValueError("conv1d kernel size must be odd")
    pad = (k - 1) // 2
    idx = reflect_pad_indices(t, pad)
    xp = x.data[:, :, idx]
    # im2col: [B,C,T,K] -> [B*T, C*K] so the contraction is one BLAS matmul
    cols = sliding_window_view(xp, k, axis=2)
    cols2 = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(batch * t, c_in * k)
    w2 = w.data.reshape(c_out, c_in * k)
    y = (cols2 @ w2.T).reshape(batch, t, c_out).transpose(0, 2, 1) + b.data[None, :, None]

    def backward(g: np.ndarray):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(batch * t, c_out)
        gw = (g2.T @ cols2).reshape(c_out, c_in, k) if w.requires_grad else None
        gb = g.sum(axis=(0, 2)) if b.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ w2).reshape(batch, t, c_in, k).transpose(0, 2, 1, 3)
            gxp = np.zeros((batch, c_in, t + 2 * pad), dtype=g.dtype)
            for j in range(k):
                gxp[:, :, j : j + t] += gcols[:, :, :, j]
            gx = gxp[:, :, pad : pad + t].copy()
            for j in range(pad):  # fold pad-position grads back onto their mirrors
                gx[:, :, pad - j] += gxp[:, :, j]
                gx[:, :, t - 2 - j] += gxp[:, :, pad + t + j]
        return gx, gw, gb

    return make_result(np.ascontiguousarray(y), (x, w, b), backward)


# --------------------------------------------------------------------------
# dense / activation
# --------------------------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w.T + b with x[B,F_in], w[F_out,F_in], b[F_out]."""
    if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
        raise ValueError("linear expects x[B,F_in], w[F_out,F_in], b[F_out]")
    if x.data.shape[1] != w.data.shape[1] or w.data.shape[0] != b.data.shape[0]:
        raise ValueError(
            f"linear shape mismatch: x{x.data.shape} w{w.data.shape} b{b.data.shape}"
        )
    y = x.data @ w.data.T + b.data

    def backward(g: np.ndarray):
        gx = g @ w.data if x.requires_grad else None
        gw = g.T @ x.data if w.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return make_result(y, (x, w, b), backward)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); subgradient at 0 is 0."""
    y = np.maximum(x.data, 0)

    def backward(g: np.ndarray):
        return ((x.data > 0) * g,)

    return make_result(y, (x,), backward)


def dropout(x: Tensor, p: float, training: bool, seed: int) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return make_result(x.data.copy(), (x,), lambda g: (g,))
    rng = np.random.default_rng(seed)
    draw_dtype = np.float32 if x.data.dtype == np.float32 else np.float64
    keep = (rng.random(x.data.shape, dtype=draw_dtype) >= p).astype(x.data.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.data.dtype)
    y = x.data * keep * scale

    def backward(g: np.ndarray):
        return (g * keep * scale,)

    return make_result(y, (x,), backward)


def max_over_time(x: Tensor) -> Tensor:
    """Per-(batch, channel) max over the time axis of [B,C,T].

    Gradient flows only to the first maximal index of each series.
    """
    if x.data.ndim != 3:
        raise ValueError("max_over_time expects x[B,C,T]")
    idx = np.argmax(x.data, axis=2)
    y = np.take_along_axis(x.data, idx[:, :, None], axis=2)[:, :, 0]

    def backward(g: np.ndarray):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx[:, :, None], g[:, :, None], axis=2)
        return (gx,)

    return make_result(y, (x,), backward)


# --------------------------------------------------------------------------
# losses / normalization
# --------------------------------------------------------------------------

def softmax_xent_rows(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over rows of cross entropy between row-softmax and target rows.

    Targets are a constant row-stochastic matrix; softmax subtracts the
    per-row max so saturated logits cannot overflow.
    """
    if logits.data.ndim != 2:
        raise ValueError("softmax_xent_rows expects a 2-d logits matrix")
    t = np.asarray(targets, dtype=logits.data.dtype)
    if t.shape != logits.data.shape:
        raise ValueError(f"targets shape {t.shape} != logits shape {logits.data.shape}")
    if np.any(t < 0) or not np.allclose(t.sum(axis=1), 1.0, atol=1e-5):
        raise ValueError("each target row must be nonnegative and sum to 1")
    n = logits.data.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    logp = shifted - np.log(denom)
    loss = -(t * logp).sum() / n

    def backward(g: np.ndarray):
        p = exp / denom
        return (g * (p - t) / n,)

    return make_result(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward)


def l2norm_rows(x: Tensor, eps: float = 1e-12, name: str = "embedding") -> Tensor:
    """Normalize each row to unit L2 norm; a ~zero-norm row is an error."""
    norms = np.sqrt((x.data.astype(np.float64) ** 2).sum(axis=1))
    bad = np.nonzero(norms <= eps)[0]
    if bad.size:
        raise NumericGuardError(f"zero-norm {name} row at index {int(bad[0])}")
    inv = (1.0 / norms).astype(x.data.dtype)
    y = x.data * inv[:, None]

    def backward(g: np.ndarray):
        dot = (g * y).sum(axis=1, keepdims=True)
        return ((g - y * dot) * inv[:, None],)

    return make_result(y, (x,), backward)


def matmul_nt(a: Tensor, b: Tensor) -> Tensor:
    """a @ b.T for a[N,D], b[M,D] -> [N,M]."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise ValueError(f"matmul_nt shape mismatch: {a.data.shape} vs {b.data.shape}")
    y = a.data @ b.data.T

    def backward(g: np.ndarray):
        ga = g @ b.data if a.requires_grad else None
        gb = g.T @ a.data if b.requires_grad else None
        return ga, gb

    return make_result(y, (a, b), backward)


def transpose2d(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ValueError("transpose2d expects a 2-d tensor")
    return make_result(x.data.T.copy(), (x,), lambda g: (g.T,))


def exp_clamp(log_scale: Tensor, max_log: float, ceiling: float | None = None) -> Tensor:
    """exp(min(log_scale, max_log)) for a scalar; zero gradient when clamped.

    ``ceiling`` pins the applied value exactly (exp(log(c)) can round a
    hair above c in float64).
    """
    if log_scale.data.ndim != 0:
        raise ValueError("exp_clamp expects a scalar tensor")
    clamped = log_scale.data <= max_log
    val = np.exp(np.minimum(log_scale.data, max_log))
    if ceiling is not None:
        val = np.minimum(val, ceiling)

    def backward(g: np.ndarray):
        return (g * val if clamped else np.zeros_like(g),)

    return make_result(np.asarray(val, dtype=log_scale.data.dtype), (log_scale,), backward)


# --------------------------------------------------------------------------
# structural ops
# --------------------------------------------------------------------------

def scale_by(x: Tensor, s: Tensor) -> Tensor:
    """Multiply a tensor by a scalar tensor (used for the temperature)."""
    if s.data.ndim != 0:
        raise ValueError("scale_by expects a scalar second argument")
    sv = x.data.dtype.type(s.data)
    y = x.data * sv

    def backward(g: np.ndarray):
        gx = g * sv if x.requires_grad else None
        gs = np.asarray((g * x.data).sum(), dtype=s.data.dtype) if s.requires_grad else None
        return gx, gs

    return make_result(y, (x, s), backward)


def mul_const(x: Tensor, c: float) -> Tensor:
    return make_result(x.data * x.data.dtype.type(c), (x,), lambda g: (g * x.data.dtype.type(c),))


def add_const(x: Tensor, c: np.ndarray) -> Tensor:
    return make_result(x.data + np.asarray(c, dtype=x.data.dtype), (x,), lambda g: (g,))


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape != y.data.shape:
        raise ValueError(f"add shape mismatch: {x.data.shape} vs {y.data.shape}")
    return make_result(x.data + y.data, (x, y), lambda g: (g, g))


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise ValueError("concat_rows expects 2-d tensors with equal width")
    n = a.data.shape[0]
    y = np.concatenate([a.data, b.data], axis=0)
    return make_result(y, (a, b), lambda g: (g[:n], g[n:]))


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows by index; backward scatter-adds (rows may repeat)."""
    idx = np.asarray(idx, dtype=np.intp)
    y = x.data[idx]

    def backward(g: np.ndarray):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return make_result(y, (x,), backward)


def embedding_bag_mean(table: Tensor, bags: list[np.ndarray]) -> Tensor:
    """Row u = mean of table rows listed in bags[u]; empty bags are invalid."""
    if any(len(bag) == 0 for bag in bags):
        raise ValueError("embedding_bag_mean received an empty bag")
    bag_arrays = [np.asarray(bag, dtype=np.intp) for bag in bags]
    y = np.stack([table.data[bag].mean(axis=0) for bag in bag_arrays])

    def backward(g: np.ndarray):
        gt = np.zeros_like(table.data)
        for u, bag in enumerate(bag_arrays):
            np.add.at(gt, bag, np.broadcast_to(g[u] / len(bag), (len(bag), g.shape[1])))
        return (gt,)

    return make_result(y, (table,), backward)


# --------------------------------------------------------------------------
# batch normalization (supervised baseline classifier)
# --------------------------------------------------------------------------

class BatchNormState:
    """Running statistics for one batch-norm layer."""

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        self.running_mean = np.zeros(num_features, dtype=np.float64)
        self.running_var = np.ones(num_features, dtype=np.float64)
        self.momentum = momentum
        self.eps = eps


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Feature-wise batch normalization over [B,F]; inference uses running stats."""
    if x.data.ndim != 2:
        raise ValueError("batchnorm expects x[B,F]")
    eps = x.data.dtype.type(state.eps)
    if training:
        mean = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mean.astype(np.float64)
        state.running_var = (1 - m) * state.running_var + m * var.astype(np.float64)
    else:
        mean = state.running_mean.astype(x.data.dtype)
        var = state.running_var.astype(x.data.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    y = gamma.data * xhat + beta.data

    def backward(g: np.ndarray):
        ggamma = (g * xhat).sum(axis=0) if gamma.requires_grad else None
        gbeta = g.sum(axis=0) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            if training:
                n = x.data.shape[0]
                gxhat = g * gamma.data
                gx = (inv_std / n) * (
                    n * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0)
                )
            else:
                gx = g * gamma.data * inv_std
        return gx, ggamma, gbeta

    return make_result(y, (x, gamma, beta), backward)


def sum_all(x: Tensor) -> Tensor:
    """Sum every element to a scalar; gradient is all-ones."""
    return make_result(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,),
                       lambda g: (np.broadcast_to(g, x.data.shape).astype(g.dtype),))
