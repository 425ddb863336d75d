"""Assembled sensor-language model: IMU encoder + two projection heads
+ pluggable text provider + learnable temperature (+ optional
same-modality head for the composite objective).
"""

from __future__ import annotations

import numpy as np

from . import numerics as nm
from .datapipe import SensorWindow
from .encoders import (
    IMU_FEATURE_DIM,
    JOINT_DIM,
    HashTextProvider,
    ImuEncoder,
    ProjectionHead,
    TableTextProvider,
)
from .numerics import Tensor
from .objectives import TemperatureParam
from .seeding import derive_seed

SIMCLR_DIM = 128


class SimclrHead:
    """Two-layer head for augmented-view embeddings (128-d output)."""

    def __init__(self, in_dim: int = IMU_FEATURE_DIM, out_dim: int = SIMCLR_DIM,
                 seed: int = 0, dtype=np.float32):
        self.inner = ProjectionHead(in_dim, out_dim=out_dim, hidden_dim=in_dim,
                                    seed=derive_seed(seed, "simclr-head"), dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.inner.forward(x)

    @property
    def params(self) -> dict[str, Tensor]:
        return self.inner.params


class NlsModel:
    """All trainable pieces of the sensor-language setup."""

    def __init__(
        self,
        text_provider: HashTextProvider | TableTextProvider,
        joint_dim: int = JOINT_DIM,
        seed: int = 0,
        dtype=np.float32,
        with_simclr_head: bool = False,
    ):
        self.joint_dim = joint_dim
        self.seed = seed
        self.encoder = ImuEncoder(seed=derive_seed(seed, "encoder"), dtype=dtype)
        self.sensor_head = ProjectionHead(
            IMU_FEATURE_DIM, out_dim=joint_dim, seed=derive_seed(seed, "sensor-head"), dtype=dtype
        )
        self.text_provider = text_provider
        self.text_head = ProjectionHead(
            text_provider.output_dim, out_dim=joint_dim,
            seed=derive_seed(seed, "text-head"), dtype=dtype,
        )
        self.temperature = TemperatureParam()
        self.simclr_head = SimclrHead(seed=seed, dtype=dtype) if with_simclr_head else None

    # -- forward paths ---------------------------------------------------
    def window_batch(self, windows: list[SensorWindow] | np.ndarray) -> Tensor:
        """Stack windows into a constant [B,3,T] tensor."""
        if isinstance(windows, np.ndarray):
            arr = windows
        else:
            arr = np.stack([w.samples for w in windows])
        return Tensor(np.ascontiguousarray(arr.transpose(0, 2, 1)))

    def encode_features(self, windows, training: bool = False, seed: int = 0) -> Tensor:
        """IMU encoder features [B,128] (before the projection head)."""
        return self.encoder.forward(self.window_batch(windows), training=training, seed=seed)

    def embed_windows(self, windows, training: bool = False, seed: int = 0) -> Tensor:
        """Joint-space sensor embeddings [B,D]."""
        feats = self.encode_features(windows, training=training, seed=seed)
        return self.sensor_head.forward(feats, training=training)

    def embed_sentences(self, sentences: list[str], training: bool = False) -> Tensor:
        """Joint-space text embeddings [B,D]; duplicate sentences share one pass."""
        unique: dict[str, int] = {}
        inverse = np.empty(len(sentences), dtype=np.intp)
        for i, s in enumerate(sentences):
            if s not in unique:
                unique[s] = len(unique)
            inverse[i] = unique[s]
        provider_out = self.text_provider.encode_batch(list(unique), training=training)
        projected = self.text_head.forward(provider_out, training=training)
        if len(unique) == len(sentences):
            return projected
        return nm.gather_rows(projected, inverse)

    # -- parameters --------------------------------------------------------
    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, p in self.encoder.params.items():
            out[f"encoder.{name}"] = p
        for name, p in self.sensor_head.params.items():
            out[f"sensor_head.{name}"] = p
        for name, p in self.text_head.params.items():
            out[f"text_head.{name}"] = p
        for name, p in self.text_provider.params.items():
            out[f"provider.{name}"] = p
        if self.simclr_head is not None:
            for name, p in self.simclr_head.params.items():
                out[f"simclr_head.{name}"] = p
        out["temperature.log_scale"] = self.temperature.log_scale
        return out

    def projection_parameters(self) -> dict[str, Tensor]:
        """The adaptation surface: both heads plus the temperature."""
        out: dict[str, Tensor] = {}
        for name, p in self.sensor_head.params.items():
            out[f"sensor_head.{name}"] = p
        for name, p in self.text_head.params.items():
            out[f"text_head.{name}"] = p
        out["temperature.log_scale"] = self.temperature.log_scale
        return out

    def frozen_parameter_names(self) -> list[str]:
        """Parameters adapt_projections must never touch."""
        trainable = set(self.projection_parameters())
        return [n for n in self.named_parameters() if n not in trainable]

    # -- state --------------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()
