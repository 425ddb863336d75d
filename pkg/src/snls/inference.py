"""Zero-shot classification, projection-head adaptation (full and
few-shot), and cross-modal top-k retrieval.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics as nm
from .datapipe import SensorWindow
from .errors import NumericGuardError
from .metrics import macro_f1
from .model import NlsModel
from .numerics import AdamState, Tensor, adam_step
from .objectives import EmbeddingBatch, clip_loss, similarity_matrix
from .prompts import PromptSet, class_sentences, sample_training_sentence
from .seeding import derive_seed, rng_for


# --------------------------------------------------------------------------
# class embeddings + zero-shot classification
# --------------------------------------------------------------------------

@dataclass
class ClassEmbeddingSet:
    """L2-normalized class vectors in the joint space."""

    activities: list[str]
    vectors: np.ndarray  # [C, D]
    provenance: str = ""

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.activities):
            raise ValueError("vectors must be [C,D] aligned with activities")


def _normalize_rows_np(x: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(x.astype(np.float64), axis=1)
    bad = np.nonzero(norms <= 1e-12)[0]
    if bad.size:
        raise NumericGuardError(f"zero-norm {what} row at index {int(bad[0])}")
    return (x.astype(np.float64) / norms[:, None]).astype(np.float64)


def build_class_embeddings(
    sentences: dict[str, list[str]],
    text_path: NlsModel,
    aggregate: str = "mean",
) -> ClassEmbeddingSet:
    """Embed each activity's sentences and aggregate to one unit vector.

    ``single`` requires exactly one sentence per activity; ``mean``
    averages the sentence embeddings and renormalizes.
    """
    if aggregate not in ("single", "mean"):
        raise ValueError(f"unknown aggregate mode {aggregate!r}")
    activities = list(sentences)
    if not activities:
        raise ValueError("no activities given")
    vectors = []
    for activity in activities:
        sents = sentences[activity]
        if not sents:
            raise ValueError(f"activity {activity!r} has no sentences")
        if aggregate == "single" and len(sents) != 1:
            raise ValueError(f"aggregate='single' needs exactly one sentence, got {len(sents)}")
        emb = text_path.embed_sentences(sents, training=False).data.astype(np.float64)
        emb = _normalize_rows_np(emb, "sentence embedding")
        vec = emb[0] if len(sents) == 1 else emb.mean(axis=0)
        vectors.append(vec)
    mat = _normalize_rows_np(np.stack(vectors), "class embedding")
    return ClassEmbeddingSet(activities=activities, vectors=mat)


def zeroshot_classify(window_embeddings: np.ndarray, classes: ClassEmbeddingSet) -> list[str]:
    """Nearest class by cosine similarity; ties go to the lowest class index."""
    emb = np.asarray(window_embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[1] != classes.vectors.shape[1]:
        raise ValueError(
            f"window embeddings [N,{classes.vectors.shape[1]}] expected, got {emb.shape}"
        )
    emb = _normalize_rows_np(emb, "window embedding")
    scores = emb @ classes.vectors.T
    picks = np.argmax(scores, axis=1)
    return [classes.activities[int(i)] for i in picks]


# --------------------------------------------------------------------------
# projection-head adaptation
# --------------------------------------------------------------------------

@dataclass
class AdaptConfig:
    """Head-only training hyperparameters (defaults mirror pre-training)."""

    lr: float = 1e-4
    weight_decay: float = 0.0
    batch_size: int = 256
    epochs: int = 50
    patience: int = 5
    train_policy: str = "base_only"
    knowledge_mode: str | None = None
    seed: int = 0


@dataclass
class AdaptResult:
    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int
    used_train_as_val: bool = False


class _FrozenTextCache:
    """Provider outputs for a frozen text tower, keyed by sentence."""

    def __init__(self, model: NlsModel):
        self.model = model
        self.cache: dict[str, np.ndarray] = {}

    def matrix(self, sentences: list[str]) -> tuple[np.ndarray, np.ndarray]:
        unique: dict[str, int] = {}
        inverse = np.empty(len(sentences), dtype=np.intp)
        for i, s in enumerate(sentences):
            if s not in unique:
                unique[s] = len(unique)
            inverse[i] = unique[s]
        rows = []
        for s in unique:
            if s not in self.cache:
                self.cache[s] = self.model.text_provider.encode_batch([s]).data[0].copy()
            rows.append(self.cache[s])
        return np.stack(rows), inverse


def _head_loss(
    model: NlsModel,
    features: np.ndarray,
    provider_rows: np.ndarray,
    inverse: np.ndarray,
    labels: list[str],
) -> Tensor:
    s = model.sensor_head.forward(Tensor(features))
    t_unique = model.text_head.forward(Tensor(provider_rows))
    t = nm.gather_rows(t_unique, inverse) if len(inverse) != provider_rows.shape[0] else t_unique
    sim = similarity_matrix(EmbeddingBatch(S=s, T=t, labels=labels), model.temperature)
    return clip_loss(sim)


def _sentences_for(
    prompt_set: PromptSet,
    labels: list[str],
    policy: str,
    knowledge_mode: str | None,
    seed: int,
) -> list[str]:
    return [
        sample_training_sentence(
            prompt_set, lab, policy, derive_seed(seed, "sentence", i), knowledge_mode
        )
        for i, lab in enumerate(labels)
    ]


def adapt_projections(
    model: NlsModel,
    labeled_windows: list[SensorWindow],
    val_windows: list[SensorWindow] | None,
    hyper: AdaptConfig,
    prompt_set: PromptSet,
) -> AdaptResult:
    """Train only the projection heads (and temperature) on target data.

    The encoder and text provider stay gradient-blocked; their outputs
    are computed once in inference mode. Early stopping keeps the
    best-validation checkpoint. When no validation windows exist the
    sampled training windows double as validation (flagged).
    """
    if hyper.epochs < 0:
        raise ValueError("epochs must be >= 0")
    labels = [w.label for w in labeled_windows]
    if len(set(labels)) < 2:
        raise ValueError("adaptation needs windows from at least 2 classes")
    used_train_as_val = not val_windows
    val = labeled_windows if used_train_as_val else val_windows
    result = AdaptResult(train_losses=[], val_losses=[], best_epoch=-1,
                         used_train_as_val=used_train_as_val)
    if hyper.epochs == 0:
        return result

    feats_train = model.encode_features(labeled_windows, training=False).data
    feats_val = model.encode_features(val, training=False).data
    text_cache = _FrozenTextCache(model)
    val_labels = [w.label for w in val]
    val_sents = _sentences_for(prompt_set, val_labels, hyper.train_policy,
                               hyper.knowledge_mode, derive_seed(hyper.seed, "adapt-val"))
    val_rows, val_inverse = text_cache.matrix(val_sents)

    params = model.projection_parameters()
    names = sorted(params)
    tensors = [params[n] for n in names]
    state = AdamState(lr=hyper.lr, weight_decay=hyper.weight_decay)
    best_val = float("inf")
    best_state = {n: params[n].data.copy() for n in names}
    n = len(labeled_windows)
    batch = max(2, min(hyper.batch_size, n))
    for epoch in range(hyper.epochs):
        order = rng_for(hyper.seed, "adapt-order", epoch).permutation(n)
        epoch_losses = []
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            if idx.size < 2:
                continue
            batch_labels = [labels[i] for i in idx]
            sents = _sentences_for(prompt_set, batch_labels, hyper.train_policy,
                                   hyper.knowledge_mode,
                                   derive_seed(hyper.seed, "adapt-batch", epoch, start))
            rows, inverse = text_cache.matrix(sents)
            for p in tensors:
                p.zero_grad()
            loss = _head_loss(model, feats_train[idx], rows, inverse, batch_labels)
            loss.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in tensors]
            adam_step(tensors, grads, state)
            epoch_losses.append(loss.item())
        val_loss = _head_loss(model, feats_val, val_rows, val_inverse, val_labels).item()
        result.train_losses.append(float(np.mean(epoch_losses)) if epoch_losses else float("nan"))
        result.val_losses.append(val_loss)
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_state = {name: t.data.copy() for name, t in zip(names, tensors)}
            result.best_epoch = epoch
        elif epoch - result.best_epoch >= hyper.patience:
            break
    for name, t in zip(names, tensors):
        t.data = best_state[name].copy()
    return result


# --------------------------------------------------------------------------
# few-shot sweep
# --------------------------------------------------------------------------

@dataclass
class FewshotLevel:
    shot: int
    scores: list[float] = field(default_factory=list)
    skipped: bool = False
    reason: str = ""

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores)) if self.scores else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.scores)) if self.scores else float("nan")


def fewshot_sweep(
    model: NlsModel,
    train_windows: list[SensorWindow],
    test_windows: list[SensorWindow],
    prompt_set: PromptSet,
    hyper: AdaptConfig,
    shots: list[int] = [2, 5, 10, 25, 50, 100],
    runs: int = 5,
    seed: int = 0,
    eval_policy: str = "base",
    aggregate: str = "mean",
) -> list[FewshotLevel]:
    """Adapt on stratified per-class samples and report mean +/- std macro-F1.

    Shot levels some class cannot fill are skipped and flagged. Each run
    restarts from the incoming (pretrained) head weights.
    """
    by_class: dict[str, list[int]] = {}
    for i, w in enumerate(train_windows):
        by_class.setdefault(w.label, []).append(i)
    activities = sorted({w.label for w in train_windows} | {w.label for w in test_windows})
    baseline = {name: p.data.copy() for name, p in model.projection_parameters().items()}
    test_feats = model.encode_features(test_windows, training=False).data
    truths = [w.label for w in test_windows]
    levels: list[FewshotLevel] = []
    for shot in shots:
        level = FewshotLevel(shot=shot)
        short = [c for c, idxs in by_class.items() if len(idxs) < shot]
        if short:
            level.skipped = True
            level.reason = f"classes with fewer than {shot} windows: {sorted(short)}"
            levels.append(level)
            continue
        for run in range(runs):
            rng = rng_for(seed, "fewshot", shot, run)
            sample: list[int] = []
            for c in sorted(by_class):
                idxs = by_class[c]
                take = rng.choice(len(idxs), size=min(shot, len(idxs)), replace=False)
                sample.extend(idxs[i] for i in take)
            subset = [train_windows[i] for i in sample]
            for name, p in model.projection_parameters().items():
                p.data = baseline[name].copy()
            run_hyper = replace(hyper, seed=derive_seed(seed, "fewshot-adapt", shot, run))
            adapt_projections(model, subset, None, run_hyper, prompt_set)
            sents = class_sentences(prompt_set, activities, eval_policy, hyper.knowledge_mode)
            classes = build_class_embeddings(sents, model, aggregate=aggregate)
            emb = model.sensor_head.forward(Tensor(test_feats)).data
            preds = zeroshot_classify(emb, classes)
            level.scores.append(macro_f1(preds, truths, set(activities)))
        levels.append(level)
    for name, p in model.projection_parameters().items():
        p.data = baseline[name].copy()
    return levels


# --------------------------------------------------------------------------
# cross-modal retrieval
# --------------------------------------------------------------------------

GAL_MAGIC = "SNLS-GAL"
GAL_VERSION = "v1"


@dataclass
class GalleryIndex:
    """Externally supplied embeddings searched by cosine similarity."""

    items: list[tuple[str, np.ndarray, str]]  # (item_id, vector, metadata)
    dim: int

    def __post_init__(self) -> None:
        ids = [item_id for item_id, _, _ in self.items]
        if len(ids) != len(set(ids)):
            raise ValueError("gallery item_ids must be unique")
        for item_id, vec, _ in self.items:
            if vec.shape != (self.dim,):
                raise ValueError(f"gallery item {item_id!r} has dim {vec.shape}")


def retrieve_topk(query: np.ndarray, gallery: GalleryIndex, k: int = 5) -> list[tuple[str, float]]:
    """Top-k gallery items by cosine score, ties broken by item_id."""
    if not gallery.items:
        raise ValueError("gallery is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (gallery.dim,):
        raise ValueError(f"query dim {q.shape} != gallery dim {gallery.dim}")
    qn = np.linalg.norm(q)
    if qn <= 1e-12:
        raise NumericGuardError("zero-norm query vector")
    scored = []
    for item_id, vec, _ in gallery.items:
        v = vec.astype(np.float64)
        denom = qn * max(np.linalg.norm(v), 1e-12)
        scored.append((item_id, float(q @ v / denom)))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[: min(k, len(scored))]


def save_gallery(gallery: GalleryIndex, path: str, provenance: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{GAL_MAGIC} {GAL_VERSION} {gallery.dim} {len(gallery.items)} {provenance}\n")
        for item_id, vec, metadata in gallery.items:
            fh.write(item_id + "\n")
            fh.write(metadata + "\n")
            fh.write(" ".join(repr(float(v)) for v in vec.astype(np.float32)) + "\n")


def load_gallery(path: str) -> GalleryIndex:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        fields = header.split(" ", 4)
        if len(fields) < 4 or fields[0] != GAL_MAGIC or fields[1] != GAL_VERSION:
            raise ValueError(f"{path}: not an {GAL_MAGIC} {GAL_VERSION} file")
        dim, count = int(fields[2]), int(fields[3])
        items: list[tuple[str, np.ndarray, str]] = []
        for _ in range(count):
            item_id = fh.readline()
            metadata = fh.readline()
            values = fh.readline()
            if not item_id or not metadata or not values:
                raise ValueError(f"{path}: truncated file, expected {count} items")
            vec = np.array([np.float32(float(t)) for t in values.split()], dtype=np.float32)
            if vec.shape[0] != dim:
                raise ValueError(f"{path}: item {item_id.strip()!r} has wrong dim")
            items.append((item_id.rstrip("\n"), vec, metadata.rstrip("\n")))
    return GalleryIndex(items=items, dim=dim)
