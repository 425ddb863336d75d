"""Contrastive pre-training loop with early stopping.

Trains the full model (encoder, both heads, text provider when
trainable, temperature) with the configured objective for up to 50
epochs, keeping the checkpoint with the best validation loss and
stopping once no improvement is seen for ``patience`` epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import TrainConfig
from ..datapipe import SensorWindow
from ..model import NlsModel
from ..numerics import AdamState, Tensor, adam_step
from ..objectives import (
    AugmentationSpec,
    EmbeddingBatch,
    augment,
    clip_loss,
    similarity_matrix,
    slip_loss,
    unicl_loss,
    unicl_target_matrix,
)
from ..prompts import PromptSet, sample_training_sentence
from ..seeding import derive_seed, rng_for


@dataclass
class PretrainData:
    train: list[SensorWindow]
    val: list[SensorWindow]
    prompts: PromptSet


@dataclass
class PretrainResult:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: int = -1

    def curves(self) -> dict:
        return {
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "best_epoch": self.best_epoch,
            "stopped_epoch": self.stopped_epoch,
        }


def _sentences(
    prompts: PromptSet, labels: list[str], ids: list[int], config: TrainConfig, *tags: object
) -> list[str]:
    return [
        sample_training_sentence(
            prompts,
            label,
            config.train_policy,
            derive_seed(config.seed, "sentence", *tags, wid),
            config.knowledge_mode,
        )
        for label, wid in zip(labels, ids)
    ]


def _batch_loss(
    model: NlsModel,
    windows: list[SensorWindow],
    ids: list[int],
    data: PretrainData,
    config: TrainConfig,
    training: bool,
    epoch_tag: object,
) -> Tensor:
    labels = [w.label for w in windows]
    sentences = _sentences(data.prompts, labels, ids, config, epoch_tag)
    dropout_seed = derive_seed(config.seed, "dropout", epoch_tag, ids[0])
    s = model.embed_windows(windows, training=training, seed=dropout_seed)
    t = model.embed_sentences(sentences, training=training)
    sim = similarity_matrix(EmbeddingBatch(S=s, T=t, labels=labels), model.temperature)
    if config.objective == "clip":
        return clip_loss(sim)
    if config.objective == "unicl":
        return unicl_loss(sim, unicl_target_matrix(labels))
    if config.objective == "slip":
        if model.simclr_head is None:
            raise ValueError("slip objective requires a model with a simclr head")
        spec = AugmentationSpec()
        # validation reuses one fixed view per window so its loss is comparable
        views1 = np.stack(
            [augment(w.samples, spec, derive_seed(config.seed, "aug1", epoch_tag, wid))
             for w, wid in zip(windows, ids)]
        )
        views2 = np.stack(
            [augment(w.samples, spec, derive_seed(config.seed, "aug2", epoch_tag, wid))
             for w, wid in zip(windows, ids)]
        )
        f1 = model.encode_features(views1, training=training,
                                   seed=derive_seed(dropout_seed, "v1"))
        f2 = model.encode_features(views2, training=training,
                                   seed=derive_seed(dropout_seed, "v2"))
        z1 = model.simclr_head.forward(f1)
        z2 = model.simclr_head.forward(f2)
        return slip_loss(sim, z1, z2, lam=config.slip_lambda, tau_s=config.simclr_tau)
    raise ValueError(f"unknown objective {config.objective!r}")


def _validation_loss(model: NlsModel, data: PretrainData, config: TrainConfig) -> float:
    total, count = 0.0, 0
    step = max(2, min(512, len(data.val)))
    for start in range(0, len(data.val), step):
        chunk = data.val[start : start + step]
        if len(chunk) < 2:
            break
        ids = list(range(start, start + len(chunk)))
        loss = _batch_loss(model, chunk, ids, data, config, training=False, epoch_tag="val")
        total += loss.item() * len(chunk)
        count += len(chunk)
    if count == 0:
        raise ValueError("validation split too small to evaluate")
    return total / count


def pretrain(config: TrainConfig, data: PretrainData, model: NlsModel) -> PretrainResult:
    """Mini-batch contrastive training; returns curves, leaves the model
    holding the best-validation parameters."""
    if not data.train or not data.val:
        raise ValueError("train and validation splits must be nonempty")
    train_users = {w.user_id for w in data.train}
    val_users = {w.user_id for w in data.val}
    if train_users & val_users:
        raise ValueError(f"users appear in both train and val: {sorted(train_users & val_users)}")

    params = model.named_parameters()
    names = sorted(params)
    tensors = [params[n] for n in names]
    state = AdamState(lr=config.lr, weight_decay=config.weight_decay)
    result = PretrainResult()
    best_val = float("inf")
    best_state = {n: p.data.copy() for n, p in zip(names, tensors)}
    n = len(data.train)
    batch = max(2, min(config.batch_size, n))
    for epoch in range(config.epochs):
        order = rng_for(config.seed, "epoch-order", epoch).permutation(n)
        epoch_losses = []
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            if idx.size < 2:
                continue
            windows = [data.train[i] for i in idx]
            for p in tensors:
                p.zero_grad()
            loss = _batch_loss(model, windows, [int(i) for i in idx], data, config,
                               training=True, epoch_tag=epoch)
            loss.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in tensors]
            adam_step(tensors, grads, state)
            epoch_losses.append(loss.item())
        val_loss = _validation_loss(model, data, config)
        result.train_losses.append(float(np.mean(epoch_losses)))
        result.val_losses.append(val_loss)
        result.stopped_epoch = epoch
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_state = {name: t.data.copy() for name, t in zip(names, tensors)}
            result.best_epoch = epoch
        elif epoch - result.best_epoch >= config.patience:
            break
    for name, t in zip(names, tensors):
        t.data = best_state[name].copy()
    return result
