"""Contrastive training objectives and sensor-window augmentations.

The core objective scales cosine similarities between paired sensor
and text embeddings by a learnable temperature and optimizes a
symmetric cross entropy over rows and columns. Variants: multi-positive
targets for batches with repeated labels, and a composite objective
adding a same-modality contrastive term over augmented views.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .numerics import Tensor
from .seeding import rng_for

INITIAL_TEMPERATURE = 1.0 / 0.07
TAU_CEILING = 100.0


@dataclass
class EmbeddingBatch:
    """Paired sensor/text embeddings: row i of S and T describe window i."""

    S: Tensor
    T: Tensor
    labels: list[str]

    def __post_init__(self) -> None:
        if self.S.data.shape != self.T.data.shape:
            raise ValueError(
                f"S and T must share [N,D]: {self.S.data.shape} vs {self.T.data.shape}"
            )
        if len(self.labels) != self.S.data.shape[0]:
            raise ValueError("labels length must equal the batch size")


class TemperatureParam:
    """Trainable log-scale with a hard ceiling on the applied value."""

    def __init__(self, initial: float = INITIAL_TEMPERATURE, ceiling: float = TAU_CEILING):
        self.log_scale = Tensor(np.float64(np.log(initial)), requires_grad=True, dtype=np.float64)
        self.clamp_max = float(np.log(ceiling))
        self.ceiling = ceiling

    @property
    def applied_scale(self) -> float:
        return float(min(np.exp(min(float(self.log_scale.data), self.clamp_max)), self.ceiling))

    def scale_tensor(self) -> Tensor:
        return nm.exp_clamp(self.log_scale, self.clamp_max, ceiling=self.ceiling)


@dataclass
class SimilarityMatrix:
    """Temperature-scaled cosine-similarity logits for one batch."""

    C: Tensor
    tau: float


def similarity_matrix(batch: EmbeddingBatch, temp: TemperatureParam) -> SimilarityMatrix:
    """C = tau * (S_hat @ T_hat.T) with row-wise L2 normalization.

    Differentiable through S, T, and the temperature's log-scale.
    """
    s_hat = nm.l2norm_rows(batch.S, name="sensor embedding")
    t_hat = nm.l2norm_rows(batch.T, name="text embedding")
    raw = nm.matmul_nt(s_hat, t_hat)
    tau = temp.scale_tensor()
    return SimilarityMatrix(C=nm.scale_by(raw, tau), tau=float(tau.data))


def _identity_targets(n: int, dtype) -> np.ndarray:
    return np.eye(n, dtype=dtype)


def clip_loss(sim: SimilarityMatrix) -> Tensor:
    """Symmetric cross entropy against the diagonal pairing.

    0.5 * (xent over rows of C + xent over rows of C.T), each averaged
    over the batch.
    """
    c = sim.C
    n, m = c.data.shape
    if n != m:
        raise ValueError(f"similarity matrix must be square, got {c.data.shape}")
    eye = _identity_targets(n, c.data.dtype)
    sensor_side = nm.softmax_xent_rows(c, eye)
    text_side = nm.softmax_xent_rows(nm.transpose2d(c), eye)
    return nm.mul_const(nm.add(sensor_side, text_side), 0.5)


def unicl_target_matrix(labels: list[str]) -> np.ndarray:
    """Row-stochastic multi-positive targets: mass spread over same-label pairs."""
    if not labels:
        raise ValueError("labels must be nonempty")
    arr = np.array(labels)
    same = (arr[:, None] == arr[None, :]).astype(np.float64)
    return same / same.sum(axis=1, keepdims=True)


def _row_normalize(m: np.ndarray) -> np.ndarray:
    sums = m.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ValueError("targets contain an all-zero row")
    return m / sums


def unicl_loss(sim: SimilarityMatrix, targets: np.ndarray) -> Tensor:
    """Symmetric cross entropy with multi-positive targets.

    The text direction uses the transposed targets re-normalized to be
    row-stochastic.
    """
    c = sim.C
    n, m = c.data.shape
    if n != m:
        raise ValueError(f"similarity matrix must be square, got {c.data.shape}")
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != (n, n):
        raise ValueError(f"targets must be [N,N], got {t.shape}")
    if np.any(t < 0) or not np.allclose(t.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("targets must be row-stochastic")
    sensor_side = nm.softmax_xent_rows(c, t.astype(c.data.dtype))
    text_side = nm.softmax_xent_rows(nm.transpose2d(c), _row_normalize(t.T).astype(c.data.dtype))
    return nm.mul_const(nm.add(sensor_side, text_side), 0.5)


def nt_xent(z1: Tensor, z2: Tensor, tau_s: float = 0.1) -> Tensor:
    """Normalized-temperature cross entropy over the 2N augmented views.

    Positives are (i, i+N); self-similarity is masked out.
    """
    if z1.data.shape != z2.data.shape:
        raise ValueError("view embeddings must share a shape")
    n = z1.data.shape[0]
    if n < 2:
        raise ValueError("nt_xent needs at least two pairs (a positive requires a negative)")
    z = nm.concat_rows(z1, z2)
    z_hat = nm.l2norm_rows(z, name="view embedding")
    logits = nm.mul_const(nm.matmul_nt(z_hat, z_hat), 1.0 / tau_s)
    mask = np.zeros((2 * n, 2 * n), dtype=logits.data.dtype)
    np.fill_diagonal(mask, -1e9)
    logits = nm.add_const(logits, mask)
    targets = np.zeros((2 * n, 2 * n), dtype=logits.data.dtype)
    for i in range(n):
        targets[i, i + n] = 1.0
        targets[i + n, i] = 1.0
    return nm.softmax_xent_rows(logits, targets)


def slip_loss(
    sim: SimilarityMatrix,
    z1: Tensor,
    z2: Tensor,
    lam: float = 1.0,
    tau_s: float = 0.1,
) -> Tensor:
    """Cross-modal loss plus lam * same-modality contrastive term."""
    base = clip_loss(sim)
    if lam == 0.0:
        return base
    return nm.add(base, nm.mul_const(nt_xent(z1, z2, tau_s=tau_s), lam))


# --------------------------------------------------------------------------
# augmentations
# --------------------------------------------------------------------------

@dataclass
class AugmentationSpec:
    """Enabled window transforms with their parameters."""

    transforms: tuple[str, ...] = (
        "jitter",
        "scaling",
        "rotation",
        "negation",
        "time_flip",
        "channel_shuffle",
        "permutation",
        "time_warp",
    )
    jitter_sigma: float = 0.05
    scaling_sigma: float = 0.1
    permutation_segments: int = 4
    time_warp_knots: int = 4
    time_warp_sigma: float = 0.2

    def __post_init__(self) -> None:
        unknown = set(self.transforms) - set(TRANSFORMS)
        if unknown:
            raise ValueError(f"unknown transforms: {sorted(unknown)}")
        if not self.transforms:
            raise ValueError("augmentation spec must enable at least one transform")


def _jitter(w: np.ndarray, rng: np.random.Generator, spec: AugmentationSpec) -> np.ndarray:
    return w + rng.normal(0.0, spec.jitter_sigma, size=w.shape)


def _scaling(w: np.ndarray, rng: np.random.Generator, spec: AugmentationSpec) -> np.ndarray:
    return w * rng.normal(1.0, spec.scaling_sigma, size=(1, w.shape[1]))


def _rotation(w: np.ndarray, rng: np.random.Generator, spec: AugmentationSpec) -> np.ndarray:
    axis = rng.normal(size=3)
    axis = axis / np.linalg.norm(axis)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    rot = np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
    return w @ rot.T


def _negation(w: np.ndarray, rng: np.random.Generator, spec: AugmentationSpec) -> np.ndarray:
    return -w


def _time_flip(w: np.ndarray, rng: np.random.Generator, spec: AugmentationSpec) -> np.ndarray:
    return w[::-1].copy()


def _channel_shuffle(w: np.ndarray, rng: np.random.Generator, spec: AugmentationSpec) -> np.ndarray:
    return w[:, rng.permutation(w.shape[1])]


def _permutation(w: np.ndarray, rng: np.random.Generator, spec: AugmentationSpec) -> np.ndarray:
    parts = np.array_split(np.arange(w.shape[0]), spec.permutation_segments)
    order = rng.permutation(len(parts))
    return w[np.concatenate([parts[i] for i in order])]


def _time_warp(w: np.ndarray, rng: np.random.Generator, spec: AugmentationSpec) -> np.ndarray:
    t = w.shape[0]
    anchors = np.linspace(0, t - 1, spec.time_warp_knots + 2)
    speeds = rng.normal(1.0, spec.time_warp_sigma, size=anchors.shape[0])
    speeds = np.maximum(speeds, 0.1)
    speed_curve = np.interp(np.arange(t), anchors, speeds)
    cum = np.cumsum(speed_curve)
    warped_t = (cum - cum[0]) / (cum[-1] - cum[0]) * (t - 1)
    return np.stack(
        [np.interp(warped_t, np.arange(t), w[:, c]) for c in range(w.shape[1])], axis=1
    )


TRANSFORMS = {
    "jitter": _jitter,
    "scaling": _scaling,
    "rotation": _rotation,
    "negation": _negation,
    "time_flip": _time_flip,
    "channel_shuffle": _channel_shuffle,
    "permutation": _permutation,
    "time_warp": _time_warp,
}


def apply_transform(name: str, window: np.ndarray, rng: np.random.Generator,
                    spec: AugmentationSpec | None = None) -> np.ndarray:
    """Apply one named transform; shape [T,3] in, [T,3] out."""
    spec = spec or AugmentationSpec()
    out = TRANSFORMS[name](np.asarray(window, dtype=np.float64), rng, spec)
    return out.astype(np.float32)


def augment(window: np.ndarray, spec: AugmentationSpec, seed: int) -> np.ndarray:
    """Apply one or two randomly chosen transforms from the spec, in order.

    Deterministic under the seed; output shape equals input shape.
    """
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != 3:
        raise ValueError(f"window must be [T,3], got {w.shape}")
    rng = rng_for(seed, "augment")
    count = min(int(rng.integers(1, 3)), len(spec.transforms))
    chosen = rng.choice(len(spec.transforms), size=count, replace=False)
    for i in chosen:
        w = TRANSFORMS[spec.transforms[int(i)]](w, rng, spec)
    return w.astype(np.float32)
