"""Accelerometer ingestion: CSV loading, resampling, windowing,
normalization, user-level fold planning, and a synthetic generator.

All functions are pure given their inputs and seeds. The canonical
representation is tri-axial acceleration at 50 Hz segmented into
2-second windows with 50% overlap.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SchemaError
from .seeding import rng_for

CSV_COLUMNS = ["user_id", "activity", "timestamp_s", "ax", "ay", "az", "sample_rate_hz"]
TARGET_HZ = 50.0
WINDOW_SAMPLES = 100


@dataclass
class SensorSeries:
    """One contiguous tri-axial recording of one user."""

    user_id: str
    channels: np.ndarray  # [T, 3]
    sample_rate_hz: float
    labels: list[str]

    def __post_init__(self) -> None:
        self.channels = np.asarray(self.channels, dtype=np.float32)
        if self.channels.ndim != 2 or self.channels.shape[1] != 3:
            raise ValueError(f"channels must be [T,3], got {self.channels.shape}")
        if self.channels.shape[0] < 1:
            raise ValueError("series must contain at least one sample")
        if len(self.labels) != self.channels.shape[0]:
            raise ValueError("labels length must match channel length")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    def __len__(self) -> int:
        return self.channels.shape[0]


@dataclass
class SensorWindow:
    """Fixed-length window with its majority label and user provenance."""

    samples: np.ndarray  # [T, 3], 100x3 in the standard configuration
    label: str
    user_id: str

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ValueError(f"window samples must be [T,3], got {self.samples.shape}")
        if self.samples.shape[0] < 1:
            raise ValueError("window must contain at least one sample")


@dataclass
class Normalizer:
    """Per-channel standardization statistics fitted on training windows."""

    mean: np.ndarray
    std: np.ndarray
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != (3,) or self.std.shape != (3,):
            raise ValueError("normalizer statistics must be 3-vectors")
        if np.any(self.std < 0):
            raise ValueError("std components must be nonnegative")


@dataclass
class FoldPlan:
    """User-level split plan: one (train, val, test) triple per fold."""

    folds: list[tuple[set[str], set[str], set[str]]]
    seed: int = 0

    def validate(self) -> None:
        all_test: list[str] = []
        for i, (train, val, test) in enumerate(self.folds):
            if train & val or train & test or val & test:
                raise ValueError(f"fold {i} has overlapping user sets")
            all_test.extend(test)
        if len(all_test) != len(set(all_test)):
            raise ValueError("a user appears in more than one test set")

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "folds": [
                {"train": sorted(tr), "val": sorted(va), "test": sorted(te)}
                for tr, va, te in self.folds
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        payload = json.loads(text)
        folds = [
            (set(f["train"]), set(f["val"]), set(f["test"])) for f in payload["folds"]
        ]
        plan = cls(folds=folds, seed=int(payload.get("seed", 0)))
        plan.validate()
        return plan


# --------------------------------------------------------------------------
# CSV loading
# --------------------------------------------------------------------------

def load_csv(path: str) -> list[SensorSeries]:
    """Load a dataset CSV into per-(user, contiguous recording) series.

    Rows are re-sorted per user by timestamp. A new recording starts
    when the sample rate changes or the time step exceeds 1.5x the
    nominal period.
    """
    rows_by_user: dict[str, list[tuple[float, str, float, float, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_COLUMNS:
            raise SchemaError(
                f"{path}: expected header {','.join(CSV_COLUMNS)}, got {','.join(header)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise SchemaError(
                    f"{path}: row {line_no} has {len(row)} fields, expected {len(CSV_COLUMNS)}"
                )
            user, activity = row[0], row[1]
            try:
                ts = float(row[2])
                ax, ay, az = float(row[3]), float(row[4]), float(row[5])
                rate = float(row[6])
            except ValueError as exc:
                raise ParseError(f"{path}: row {line_no}: {exc}") from None
            if rate <= 0:
                raise ParseError(f"{path}: row {line_no}: sample_rate_hz must be positive")
            rows_by_user.setdefault(user, []).append((ts, activity, ax, ay, az, rate))

    series: list[SensorSeries] = []
    for user in sorted(rows_by_user):
        rows = sorted(rows_by_user[user], key=lambda r: r[0])
        start = 0
        for i in range(1, len(rows) + 1):
            new_segment = i == len(rows)
            if not new_segment:
                rate = rows[i - 1][5]
                gap = rows[i][0] - rows[i - 1][0]
                new_segment = rows[i][5] != rate or gap > 1.5 / rate
            if new_segment:
                chunk = rows[start:i]
                series.append(
                    SensorSeries(
                        user_id=user,
                        channels=np.array([r[2:5] for r in chunk], dtype=np.float32),
                        sample_rate_hz=chunk[0][5],
                        labels=[r[1] for r in chunk],
                    )
                )
                start = i
    return series


def save_csv(path: str, series: list[SensorSeries]) -> None:
    """Write series in the dataset CSV format (inverse of load_csv).

    Consecutive recordings of one user are separated by a 10-second
    timestamp gap so the loader's contiguity split recovers them.
    """
    clock: dict[str, float] = {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for s in series:
            period = 1.0 / s.sample_rate_hz
            start = clock.get(s.user_id, 0.0)
            for i in range(len(s)):
                writer.writerow(
                    [
                        s.user_id,
                        s.labels[i],
                        f"{start + i * period:.6f}",
                        repr(float(s.channels[i, 0])),
                        repr(float(s.channels[i, 1])),
                        repr(float(s.channels[i, 2])),
                        repr(float(s.sample_rate_hz)),
                    ]
                )
            clock[s.user_id] = start + len(s) * period + 10.0


# --------------------------------------------------------------------------
# resampling / segmentation
# --------------------------------------------------------------------------

def resample(series: SensorSeries, target_hz: float = TARGET_HZ) -> SensorSeries:
    """Linear-interpolate each channel onto a uniform grid at target_hz.

    Labels follow by nearest source time. Output length is
    round(T * target / source) so total duration is preserved to within
    one target-rate period.
    """
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    if series.sample_rate_hz == target_hz:
        return SensorSeries(
            user_id=series.user_id,
            channels=series.channels.copy(),
            sample_rate_hz=series.sample_rate_hz,
            labels=list(series.labels),
        )
    n_in = len(series)
    n_out = max(1, round(n_in * target_hz / series.sample_rate_hz))
    t_in = np.arange(n_in, dtype=np.float64) / series.sample_rate_hz
    t_out = np.arange(n_out, dtype=np.float64) / target_hz
    channels = np.stack(
        [
            np.interp(t_out, t_in, series.channels[:, c].astype(np.float64))
            for c in range(3)
        ],
        axis=1,
    ).astype(np.float32)
    nearest = np.clip(np.rint(t_out * series.sample_rate_hz).astype(int), 0, n_in - 1)
    labels = [series.labels[i] for i in nearest]
    return SensorSeries(
        user_id=series.user_id,
        channels=channels,
        sample_rate_hz=target_hz,
        labels=labels,
    )


def _majority_label(labels: list[str]) -> str:
    counts: dict[str, int] = {}
    first_pos: dict[str, int] = {}
    for i, lab in enumerate(labels):
        counts[lab] = counts.get(lab, 0) + 1
        if lab not in first_pos:
            first_pos[lab] = i
    best = max(counts.items(), key=lambda kv: (kv[1], -first_pos[kv[0]]))
    return best[0]


def segment(
    series: SensorSeries,
    window_seconds: float = 2.0,
    overlap_fraction: float = 0.5,
) -> list[SensorWindow]:
    """Slice a series into fixed windows; short tails are dropped.

    The window label is the majority of its sample labels, ties broken
    by earliest occurrence inside the window.
    """
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap_fraction must be in [0, 1)")
    window_len = round(window_seconds * series.sample_rate_hz)
    if window_len < 1:
        raise ValueError("window length must be at least one sample")
    hop = max(1, round(window_len * (1.0 - overlap_fraction)))
    windows: list[SensorWindow] = []
    for start in range(0, len(series) - window_len + 1, hop):
        chunk = series.channels[start : start + window_len]
        labels = series.labels[start : start + window_len]
        windows.append(
            SensorWindow(
                samples=chunk.copy(),
                label=_majority_label(labels),
                user_id=series.user_id,
            )
        )
    return windows


# --------------------------------------------------------------------------
# normalization
# --------------------------------------------------------------------------

def fit_normalizer(train_windows: list[SensorWindow]) -> Normalizer:
    """Per-channel mean and population std over every training sample."""
    if not train_windows:
        raise ValueError("cannot fit a normalizer on zero windows")
    stacked = np.concatenate([w.samples for w in train_windows], axis=0).astype(np.float64)
    return Normalizer(mean=stacked.mean(axis=0), std=stacked.std(axis=0))


def apply_normalizer(norm: Normalizer, windows: list[SensorWindow]) -> list[SensorWindow]:
    """Standardize each window with the fitted statistics; labels unchanged."""
    denom = np.maximum(norm.std, norm.epsilon)
    return [
        SensorWindow(
            samples=((w.samples.astype(np.float64) - norm.mean) / denom).astype(np.float32),
            label=w.label,
            user_id=w.user_id,
        )
        for w in windows
    ]


# --------------------------------------------------------------------------
# fold planning
# --------------------------------------------------------------------------

def make_user_folds(user_ids: set[str], num_folds: int = 5, seed: int = 0) -> FoldPlan:
    """Partition users into test groups; remaining users split 20% val / 80% train.

    Validation size rounds up with a floor of one user. Deterministic
    for a fixed seed.
    """
    users = sorted(user_ids)
    if len(users) < num_folds:
        raise ValueError(f"need at least {num_folds} users, got {len(users)}")
    if num_folds < 1:
        raise ValueError("num_folds must be >= 1")
    rng = rng_for(seed, "fold-plan")
    order = [users[i] for i in rng.permutation(len(users))]
    base, extra = divmod(len(order), num_folds)
    folds: list[tuple[set[str], set[str], set[str]]] = []
    cursor = 0
    groups: list[list[str]] = []
    for f in range(num_folds):
        size = base + (1 if f < extra else 0)
        groups.append(order[cursor : cursor + size])
        cursor += size
    for f in range(num_folds):
        test = groups[f]
        remaining = [u for u in order if u not in set(test)]
        n_val = max(1, math.ceil(0.2 * len(remaining)))
        val = remaining[:n_val]
        train = remaining[n_val:]
        if not train:
            raise ValueError("fold leaves no training users; add users or reduce folds")
        folds.append((set(train), set(val), set(test)))
    plan = FoldPlan(folds=folds, seed=seed)
    plan.validate()
    return plan


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

@dataclass
class DomainShiftSpec:
    """Deterministic sensor-heterogeneity transform: y = gain * P(x) + bias."""

    gain: float = 1.0
    channel_permutation: tuple[int, int, int] | None = None
    bias: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def to_json_dict(self) -> dict:
        return {
            "gain": self.gain,
            "channel_permutation": list(self.channel_permutation)
            if self.channel_permutation
            else None,
            "bias": list(self.bias),
        }


DEFAULT_ACTIVITY_NAMES = [
    "walking",
    "running",
    "sitting",
    "standing",
    "cycling",
    "climbing stairs",
    "jumping",
    "rowing",
    "stretching",
    "sweeping",
    "kneeling",
    "crawling",
    "dancing",
    "boxing",
    "swimming",
    "skipping",
]

# amplitude triples cycle through distinct channel-dominance patterns so
# classes stay separable after per-channel standardization
_BASE_AMPLITUDES = np.array([[1.0, 0.55, 0.25], [0.25, 1.0, 0.55], [0.55, 0.25, 1.0]])


def class_frequency(k: int) -> float:
    """Class-specific oscillation frequency (Hz)."""
    return 0.5 + 0.4 * k


def class_amplitudes(k: int) -> np.ndarray:
    """Per-channel amplitude pattern for class k."""
    return _BASE_AMPLITUDES[k % 3] * (0.8 + 0.25 * (k // 3))


def synth_generate(
    num_classes: int,
    users_per_class: int,
    windows_per_user: int,
    shift: DomainShiftSpec | None = None,
    seed: int = 0,
    noise_sigma: float = 0.05,
    activity_names: list[str] | None = None,
    sample_rate_hz: float = TARGET_HZ,
) -> list[SensorSeries]:
    """Generate one labeled series per (user, class).

    Every user records every class: class k is a sinusoid at
    0.5 + 0.4k Hz with a class-specific per-channel amplitude pattern,
    a per-(user, class) random phase, and additive Gaussian noise. The
    optional shift applies gain, channel permutation, and bias after
    noise, so gain scaling is exactly linear in the generated values.
    """
    if num_classes < 1 or users_per_class < 1 or windows_per_user < 1:
        raise ValueError("all synth_generate counts must be >= 1")
    names = list(activity_names) if activity_names is not None else list(DEFAULT_ACTIVITY_NAMES)
    while len(names) < num_classes:
        names.append(f"activity {len(names)}")
    shift = shift or DomainShiftSpec()
    length = WINDOW_SAMPLES + (windows_per_user - 1) * (WINDOW_SAMPLES // 2)
    t = np.arange(length, dtype=np.float64) / sample_rate_hz
    channel_phase = np.array([0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0])
    perm = list(shift.channel_permutation) if shift.channel_permutation else [0, 1, 2]
    if sorted(perm) != [0, 1, 2]:
        raise ValueError("channel_permutation must be a permutation of (0,1,2)")
    bias = np.asarray(shift.bias, dtype=np.float64)
    out: list[SensorSeries] = []
    for u in range(users_per_class):
        user_id = f"user{u:03d}"
        for k in range(num_classes):
            rng = rng_for(seed, "synth", u, k)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = class_amplitudes(k)
            freq = class_frequency(k)
            clean = np.stack(
                [
                    amp[c] * np.sin(2.0 * np.pi * freq * t + phase + channel_phase[c])
                    for c in range(3)
                ],
                axis=1,
            )
            noisy = clean + rng.normal(0.0, noise_sigma, size=clean.shape) if noise_sigma > 0 else clean
            shifted = shift.gain * noisy[:, perm] + bias
            out.append(
                SensorSeries(
                    user_id=user_id,
                    channels=shifted.astype(np.float32),
                    sample_rate_hz=sample_rate_hz,
                    labels=[names[k]] * length,
                )
            )
    return out
