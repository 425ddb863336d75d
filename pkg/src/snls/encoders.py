"""Sensor and text encoders plus the two projection heads.

The IMU encoder is three conv blocks (32, 64, 128 filters, kernel 3,
reflect padding, ReLU, dropout 0.2) with max pooling over time. Text
providers are pluggable: a trainable hashing encoder for self-contained
runs, or a frozen precomputed-embedding table standing in for a
pretrained language model.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .numerics import Tensor
from .prompts import collapse_whitespace
from .seeding import derive_seed, rng_for

JOINT_DIM = 512
IMU_FEATURE_DIM = 128
HASH_DIM = 768
HASH_BUCKETS = 4096
WINDOW_LEN = 100

_TOKEN = re.compile(r"[a-z0-9]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def canon_sentence(text: str) -> str:
    """Canonical sentence key: trim and collapse internal whitespace."""
    return collapse_whitespace(text)


def fnv1a_64(token: str) -> int:
    """64-bit FNV-1a over the token's UTF-8 bytes; stable across platforms."""
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def tokenize(sentence: str) -> list[str]:
    return _TOKEN.findall(sentence.lower())


def token_buckets(sentence: str, buckets: int = HASH_BUCKETS) -> np.ndarray:
    toks = tokenize(sentence)
    if not toks:
        raise ValueError(f"sentence {sentence!r} is empty after tokenization")
    return np.array([fnv1a_64(t) % buckets for t in toks], dtype=np.intp)


def init_weight(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def init_bias(shape: tuple[int, ...], dtype) -> Tensor:
    """Biases start at zero: the encoder is then positively homogeneous at
    init, which keeps train-time (dropout-scaled) and inference features
    on compatible scales through the max pool."""
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


# --------------------------------------------------------------------------
# IMU encoder
# --------------------------------------------------------------------------

class ImuEncoder:
    """conv(3->32) / conv(32->64) / conv(64->128), each ReLU + dropout,
    then max over time -> 128-d feature vector."""

    FILTERS = (32, 64, 128)
    KERNEL = 3
    DROPOUT_P = 0.2

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.params: dict[str, Tensor] = {}
        c_in = 3
        for i, c_out in enumerate(self.FILTERS):
            rng = rng_for(seed, "imu-conv", i)
            fan_in = c_in * self.KERNEL
            self.params[f"conv{i}.w"] = init_weight(rng, (c_out, c_in, self.KERNEL), fan_in, dtype)
            self.params[f"conv{i}.b"] = init_bias((c_out,), dtype)
            c_in = c_out

    def forward(self, x: Tensor, training: bool = False, seed: int = 0) -> Tensor:
        if x.data.ndim != 3 or x.data.shape[1] != 3 or x.data.shape[2] != WINDOW_LEN:
            raise ValueError(f"expected windows of shape [B,3,{WINDOW_LEN}], got {x.data.shape}")
        h = x
        for i in range(len(self.FILTERS)):
            h = nm.conv1d(h, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"])
            h = nm.relu(h)
            h = nm.dropout(h, self.DROPOUT_P, training, derive_seed(seed, "imu-dropout", i))
        return nm.max_over_time(h)


def imu_encode(encoder: ImuEncoder, batch: Tensor, training: bool = False, seed: int = 0) -> Tensor:
    """Encode a [B,3,100] batch of normalized windows to [B,128] features."""
    return encoder.forward(batch, training=training, seed=seed)


# --------------------------------------------------------------------------
# projection heads
# --------------------------------------------------------------------------

class ProjectionHead:
    """Two linear layers with a ReLU between, projecting into the joint space."""

    def __init__(self, in_dim: int, out_dim: int = JOINT_DIM, hidden_dim: int = JOINT_DIM,
                 seed: int = 0, dtype=np.float32):
        self.in_dim = in_dim
        self.out_dim = out_dim
        rng = rng_for(seed, "projection", in_dim, out_dim)
        self.params = {
            "fc1.w": init_weight(rng, (hidden_dim, in_dim), in_dim, dtype),
            "fc1.b": init_bias((hidden_dim,), dtype),
            "fc2.w": init_weight(rng, (out_dim, hidden_dim), hidden_dim, dtype),
            "fc2.b": init_bias((out_dim,), dtype),
        }

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.in_dim:
            raise ValueError(f"projection head expects [B,{self.in_dim}], got {x.data.shape}")
        h = nm.linear(x, self.params["fc1.w"], self.params["fc1.b"])
        h = nm.relu(h)
        return nm.linear(h, self.params["fc2.w"], self.params["fc2.b"])


def project(head: ProjectionHead, features: Tensor, training: bool = False) -> Tensor:
    return head.forward(features, training=training)


# --------------------------------------------------------------------------
# text providers
# --------------------------------------------------------------------------

class HashTextProvider:
    """Trainable bag-of-hashed-tokens sentence encoder.

    Tokens hash (FNV-1a 64-bit) into 4096 buckets of a trainable
    768-wide embedding table; the sentence vector is the mean of its
    token embeddings followed by a trainable 768->768 linear map.
    """

    kind = "hash_trainable"

    def __init__(self, seed: int = 0, dim: int = HASH_DIM, buckets: int = HASH_BUCKETS,
                 dtype=np.float32):
        self.output_dim = dim
        self.buckets = buckets
        rng = rng_for(seed, "hash-text")
        self.params = {
            "table": Tensor((rng.normal(0.0, 0.02, size=(buckets, dim))).astype(dtype),
                            requires_grad=True),
            "proj.w": init_weight(rng, (dim, dim), dim, dtype),
            "proj.b": init_bias((dim,), dtype),
        }

    def encode_batch(self, sentences: list[str], training: bool = False) -> Tensor:
        bags = [token_buckets(s, self.buckets) for s in sentences]
        pooled = nm.embedding_bag_mean(self.params["table"], bags)
        return nm.linear(pooled, self.params["proj.w"], self.params["proj.b"])

    def encode(self, sentence: str, training: bool = False) -> Tensor:
        return self.encode_batch([sentence], training=training)


class TableTextProvider:
    """Frozen provider backed by a precomputed sentence-embedding table."""

    kind = "precomputed_table"

    def __init__(self, table: "EmbeddingTable"):
        self.table = table
        self.output_dim = table.dim
        self.params: dict[str, Tensor] = {}

    def encode_batch(self, sentences: list[str], training: bool = False) -> Tensor:
        return Tensor(np.stack([self.table.lookup(s) for s in sentences]))

    def encode(self, sentence: str, training: bool = False) -> Tensor:
        return self.encode_batch([sentence])


def hash_text_encode(provider: HashTextProvider, sentence: str, training: bool = False) -> Tensor:
    return provider.encode(sentence, training=training)


def table_text_encode(provider: TableTextProvider, sentence: str) -> np.ndarray:
    return provider.table.lookup(sentence)


# --------------------------------------------------------------------------
# embedding table + SNLS-EMB v1 file format
# --------------------------------------------------------------------------

EMB_MAGIC = "SNLS-EMB"
EMB_VERSION = "v1"


@dataclass
class EmbeddingTable:
    """sentence -> vector store; keys canonicalized, vectors float32."""

    entries: dict[str, np.ndarray]
    dim: int
    provenance: str = ""

    def __post_init__(self) -> None:
        for key, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise ValueError(f"entry {key!r} has dim {vec.shape}, expected ({self.dim},)")

    @classmethod
    def from_pairs(cls, pairs: list[tuple[str, np.ndarray]], provenance: str = "") -> "EmbeddingTable":
        entries: dict[str, np.ndarray] = {}
        dim = None
        for sentence, vec in pairs:
            key = canon_sentence(sentence)
            if key in entries:
                raise ValueError(f"duplicate canonical sentence {key!r}")
            arr = np.asarray(vec, dtype=np.float32)
            if dim is None:
                dim = arr.shape[0]
            entries[key] = arr
        if dim is None:
            raise ValueError("embedding table needs at least one entry")
        return cls(entries=entries, dim=dim, provenance=provenance)

    def lookup(self, sentence: str) -> np.ndarray:
        key = canon_sentence(sentence)
        if key not in self.entries:
            raise KeyError(f"sentence not in embedding table: {key!r}")
        return self.entries[key]

    def __len__(self) -> int:
        return len(self.entries)


def format_float32(value: np.float32) -> str:
    """Decimal text that round-trips the exact float32 bit pattern."""
    return repr(float(value))


def save_embedding_table(table: EmbeddingTable, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{EMB_MAGIC} {EMB_VERSION} {table.dim} {len(table)} {table.provenance}\n")
        for sentence, vec in table.entries.items():
            fh.write(sentence + "\n")
            fh.write(" ".join(format_float32(v) for v in vec) + "\n")


def load_embedding_table(path: str) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        fields = header.split(" ", 4)
        if len(fields) < 4 or fields[0] != EMB_MAGIC or fields[1] != EMB_VERSION:
            raise ValueError(f"{path}: not an {EMB_MAGIC} {EMB_VERSION} file")
        dim, count = int(fields[2]), int(fields[3])
        provenance = fields[4] if len(fields) == 5 else ""
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            sentence = fh.readline()
            values = fh.readline()
            if not sentence or not values:
                raise ValueError(f"{path}: truncated file, expected {count} entries")
            key = canon_sentence(sentence.rstrip("\n"))
            vec = np.array([np.float32(float(tok)) for tok in values.split()], dtype=np.float32)
            if vec.shape[0] != dim:
                raise ValueError(f"{path}: entry {key!r} has {vec.shape[0]} values, expected {dim}")
            if key in entries:
                raise ValueError(f"{path}: duplicate canonical sentence {key!r}")
            entries[key] = vec
    return EmbeddingTable(entries=entries, dim=dim, provenance=provenance)
