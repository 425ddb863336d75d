"""Supervised baseline: the IMU encoder with an MLP classifier on top,
trained end-to-end with cross entropy.

Classifier stack: 128 -> 256 -> 128 -> num_classes with batch
normalization, ReLU, and dropout (p=0.2) between the linear layers.
"""

from __future__ import annotations

import numpy as np

from .. import numerics as nm
from ..config import TrainConfig
from ..datapipe import SensorWindow
from ..encoders import IMU_FEATURE_DIM, ImuEncoder, init_bias, init_weight
from ..numerics import AdamState, BatchNormState, Tensor, adam_step
from ..seeding import derive_seed, rng_for

MLP_HIDDEN = (256, 128)
DROPOUT_P = 0.2


class ConvClassifier:
    """IMU encoder + three-layer MLP classifier."""

    def __init__(self, classes: list[str], seed: int = 0, dtype=np.float32):
        self.classes = sorted(classes)
        self.encoder = ImuEncoder(seed=derive_seed(seed, "baseline-encoder"), dtype=dtype)
        self.params: dict[str, Tensor] = dict(
            (f"encoder.{k}", v) for k, v in self.encoder.params.items()
        )
        self.bn_states: list[BatchNormState] = []
        dims = [IMU_FEATURE_DIM, *MLP_HIDDEN, len(self.classes)]
        rng = rng_for(seed, "baseline-mlp")
        for i in range(len(dims) - 1):
            self.params[f"mlp{i}.w"] = init_weight(rng, (dims[i + 1], dims[i]), dims[i], dtype)
            self.params[f"mlp{i}.b"] = init_bias((dims[i + 1],), dtype)
            if i < len(dims) - 2:
                self.params[f"bn{i}.gamma"] = Tensor(np.ones(dims[i + 1], dtype=dtype),
                                                     requires_grad=True)
                self.params[f"bn{i}.beta"] = Tensor(np.zeros(dims[i + 1], dtype=dtype),
                                                    requires_grad=True)
                self.bn_states.append(BatchNormState(dims[i + 1]))

    def logits(self, windows: list[SensorWindow] | np.ndarray, training: bool = False,
               seed: int = 0) -> Tensor:
        if isinstance(windows, np.ndarray):
            arr = windows
        else:
            arr = np.stack([w.samples for w in windows])
        x = Tensor(np.ascontiguousarray(arr.transpose(0, 2, 1)))
        h = self.encoder.forward(x, training=training, seed=derive_seed(seed, "enc"))
        for i in range(len(MLP_HIDDEN) + 1):
            h = nm.linear(h, self.params[f"mlp{i}.w"], self.params[f"mlp{i}.b"])
            if i < len(MLP_HIDDEN):
                h = nm.batchnorm(h, self.params[f"bn{i}.gamma"], self.params[f"bn{i}.beta"],
                                 self.bn_states[i], training)
                h = nm.relu(h)
                h = nm.dropout(h, DROPOUT_P, training, derive_seed(seed, "mlp-dropout", i))
        return h

    def recalibrate_bn(self, windows: list[SensorWindow]) -> None:
        """Re-estimate batch-norm running statistics from deterministic
        (inference-mode) activations over the given windows.

        Stacked inverted dropout ahead of the max pool makes train-mode
        activations systematically larger than inference-mode ones, so
        statistics collected during training describe a distribution the
        classifier never sees at prediction time. One deterministic pass
        per layer repairs that.
        """
        arr = np.stack([w.samples for w in windows])
        x = Tensor(np.ascontiguousarray(arr.transpose(0, 2, 1)))
        h = self.encoder.forward(x, training=False)
        for i in range(len(MLP_HIDDEN) + 1):
            h = nm.linear(h, self.params[f"mlp{i}.w"], self.params[f"mlp{i}.b"])
            if i < len(MLP_HIDDEN):
                state = self.bn_states[i]
                state.running_mean = h.data.mean(axis=0).astype(np.float64)
                state.running_var = h.data.var(axis=0).astype(np.float64)
                h = nm.batchnorm(h, self.params[f"bn{i}.gamma"], self.params[f"bn{i}.beta"],
                                 state, training=False)
                h = nm.relu(h)

    def predict(self, windows: list[SensorWindow]) -> list[str]:
        out = self.logits(windows, training=False)
        return [self.classes[int(i)] for i in np.argmax(out.data, axis=1)]

    def one_hot(self, labels: list[str]) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.classes)}
        target = np.zeros((len(labels), len(self.classes)), dtype=np.float32)
        for row, label in enumerate(labels):
            target[row, index[label]] = 1.0
        return target


def train_classifier(
    classifier: ConvClassifier,
    train: list[SensorWindow],
    val: list[SensorWindow],
    config: TrainConfig,
) -> dict:
    """End-to-end cross-entropy training with best-validation early stopping."""
    if not train or not val:
        raise ValueError("train and validation splits must be nonempty")
    names = sorted(classifier.params)
    tensors = [classifier.params[n] for n in names]
    state = AdamState(lr=config.lr, weight_decay=config.weight_decay)

    def bn_snapshot():
        return [(s.running_mean.copy(), s.running_var.copy()) for s in classifier.bn_states]

    best_val = float("inf")
    best_state = {n: t.data.copy() for n, t in zip(names, tensors)}
    best_bn = bn_snapshot()
    best_epoch = -1
    curves = {"train_losses": [], "val_losses": []}
    n = len(train)
    batch = max(2, min(config.batch_size, n))
    val_targets = classifier.one_hot([w.label for w in val])
    for epoch in range(config.epochs):
        order = rng_for(config.seed, "baseline-order", epoch).permutation(n)
        losses = []
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            if idx.size < 2:
                continue
            windows = [train[i] for i in idx]
            targets = classifier.one_hot([w.label for w in windows])
            for p in tensors:
                p.zero_grad()
            logits = classifier.logits(windows, training=True,
                                       seed=derive_seed(config.seed, "baseline", epoch, start))
            loss = nm.softmax_xent_rows(logits, targets)
            loss.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in tensors]
            adam_step(tensors, grads, state)
            losses.append(loss.item())
        classifier.recalibrate_bn(train)
        val_logits = classifier.logits(val, training=False)
        val_loss = nm.softmax_xent_rows(val_logits, val_targets).item()
        curves["train_losses"].append(float(np.mean(losses)))
        curves["val_losses"].append(val_loss)
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_state = {name: t.data.copy() for name, t in zip(names, tensors)}
            best_bn = bn_snapshot()
            best_epoch = epoch
        elif epoch - best_epoch >= config.patience:
            break
    for name, t in zip(names, tensors):
        t.data = best_state[name].copy()
    for bn, (mean, var) in zip(classifier.bn_states, best_bn):
        bn.running_mean, bn.running_var = mean.copy(), var.copy()
    curves["best_epoch"] = best_epoch
    return curves
