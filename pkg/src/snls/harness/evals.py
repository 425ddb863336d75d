"""Evaluation protocols: standard user-level five-fold zero-shot,
unseen-activity groups, cross-modal retrieval, and the supervised
baseline.

Folds and groups are independent; ``SNLS_THREADS`` caps how many run
concurrently (default 1, fully sequential and deterministic).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace

from ..config import TrainConfig, UnseenGroupPlan
from ..datapipe import (
    FoldPlan,
    SensorSeries,
    SensorWindow,
    TARGET_HZ,
    apply_normalizer,
    fit_normalizer,
    make_user_folds,
    resample,
    segment,
)
from ..encoders import EmbeddingTable, HashTextProvider, TableTextProvider
from ..inference import (
    GalleryIndex,
    build_class_embeddings,
    retrieve_topk,
    zeroshot_classify,
)
from ..metrics import macro_f1_detail
from ..model import NlsModel
from ..prompts import PromptSet, class_sentences, default_prompt_set
from ..seeding import derive_seed, rng_for
from .baseline import ConvClassifier, train_classifier
from .report import EvalReport, hash_windows
from .train import PretrainData, pretrain


def snls_threads() -> int:
    try:
        return max(1, int(os.environ.get("SNLS_THREADS", "1")))
    except ValueError:
        return 1


def prepare_windows(series: list[SensorSeries]) -> list[SensorWindow]:
    """Resample everything to 50 Hz and segment with the standard window."""
    windows: list[SensorWindow] = []
    for s in series:
        if s.sample_rate_hz != TARGET_HZ:
            s = resample(s, TARGET_HZ)
        windows.extend(segment(s))
    return windows


def build_model(config: TrainConfig, table: EmbeddingTable | None = None,
                seed: int | None = None) -> NlsModel:
    if config.provider == "table":
        if table is None:
            raise ValueError("table provider requires an embedding table")
        provider = TableTextProvider(table)
    else:
        provider = HashTextProvider(seed=derive_seed(seed if seed is not None else config.seed,
                                                     "provider"))
    return NlsModel(
        provider,
        joint_dim=config.joint_dim,
        seed=seed if seed is not None else config.seed,
        with_simclr_head=config.objective == "slip",
    )


def _split_by_users(windows: list[SensorWindow], users: set[str]) -> list[SensorWindow]:
    return [w for w in windows if w.user_id in users]


def _audit_user_disjoint(fold: int, train: list[SensorWindow], val: list[SensorWindow],
                         test: list[SensorWindow]) -> None:
    tr = {w.user_id for w in train}
    va = {w.user_id for w in val}
    te = {w.user_id for w in test}
    if tr & va or tr & te or va & te:
        raise AssertionError(f"fold {fold}: user leakage across splits")


def _fold_records_parallel(jobs: list, runner) -> list[dict]:
    workers = snls_threads()
    if workers == 1:
        return [runner(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(runner, jobs))


# --------------------------------------------------------------------------
# standard five-fold protocol
# --------------------------------------------------------------------------

def run_standard_eval(
    dataset: list[SensorSeries],
    config: TrainConfig,
    prompt_set: PromptSet | None = None,
    num_folds: int = 5,
    table: EmbeddingTable | None = None,
    plan: FoldPlan | None = None,
) -> EvalReport:
    """Per fold: normalize with train statistics, pre-train, zero-shot
    classify the held-out users' windows, aggregate macro-F1."""
    prompts = prompt_set or default_prompt_set()
    windows = prepare_windows(dataset)
    users = {w.user_id for w in windows}
    plan = plan or make_user_folds(users, num_folds=num_folds, seed=config.seed)
    activities = sorted({w.label for w in windows})

    def run_fold(fold_idx: int) -> dict:
        train_users, val_users, test_users = plan.folds[fold_idx]
        train_w = _split_by_users(windows, train_users)
        val_w = _split_by_users(windows, val_users)
        test_w = _split_by_users(windows, test_users)
        _audit_user_disjoint(fold_idx, train_w, val_w, test_w)
        norm = fit_normalizer(train_w)
        train_n = apply_normalizer(norm, train_w)
        val_n = apply_normalizer(norm, val_w)
        test_n = apply_normalizer(norm, test_w)
        model = build_model(config, table=table, seed=derive_seed(config.seed, "fold", fold_idx))
        curves = pretrain(config, PretrainData(train_n, val_n, prompts), model)
        sentences = class_sentences(prompts, activities, config.eval_policy, config.knowledge_mode)
        classes = build_class_embeddings(sentences, model, aggregate=config.aggregate)
        preds = zeroshot_classify(model.embed_windows(test_n).data, classes)
        detail = macro_f1_detail(preds, [w.label for w in test_n], set(activities))
        return {
            "fold": fold_idx,
            "macro_f1": detail.macro_f1,
            "per_class_f1": detail.per_class_f1,
            "absent_classes": detail.absent_classes,
            "test_users": sorted(test_users),
            "best_epoch": curves.best_epoch,
            "stopped_epoch": curves.stopped_epoch,
            "user_audit": "ok",
        }

    records = _fold_records_parallel(list(range(len(plan.folds))), run_fold)
    report = EvalReport(
        protocol="standard-5fold",
        config=asdict(config),
        data_hash=hash_windows(windows),
        seed=config.seed,
        folds=sorted(records, key=lambda r: r["fold"]),
    )
    return report.finalize()


# --------------------------------------------------------------------------
# unseen-activity protocol
# --------------------------------------------------------------------------

def unseen_split_windows(
    windows: list[SensorWindow],
    group: set[str],
    seed: int,
) -> tuple[list[SensorWindow], list[SensorWindow], list[SensorWindow]]:
    """(train, val, test) for one unseen group.

    Test carries every window of the group's activities; the remaining
    (seen-activity) windows split 80/20 by user for early stopping.
    Users may appear on both sides; activities never do.
    """
    seen_w = [w for w in windows if w.label not in group]
    test_w = [w for w in windows if w.label in group]
    users = sorted({w.user_id for w in seen_w})
    if len(users) < 2:
        raise ValueError("need at least 2 users with seen-activity windows")
    rng = rng_for(seed, "unseen-val-users")
    order = [users[i] for i in rng.permutation(len(users))]
    n_val = max(1, math.ceil(0.2 * len(order)))
    val_users = set(order[:n_val])
    train_w = [w for w in seen_w if w.user_id not in val_users]
    val_w = [w for w in seen_w if w.user_id in val_users]
    leaked = {w.label for w in train_w} & group
    if leaked:
        raise AssertionError(f"unseen-group leakage: {sorted(leaked)} in training labels")
    return train_w, val_w, test_w


def run_unseen_eval(
    dataset: list[SensorSeries],
    plan: UnseenGroupPlan,
    config: TrainConfig,
    prompt_set: PromptSet | None = None,
    table: EmbeddingTable | None = None,
) -> EvalReport:
    """Per group: pre-train on all non-group activities, classify group
    windows against only the group's sentences; no adaptation.

    Training hyperparameters are pinned to the protocol's fixed setting
    (lr 1e-4, weight decay 0, batch 256, 50 epochs).
    """
    prompts = prompt_set or default_prompt_set()
    windows = prepare_windows(dataset)
    activities = {w.label for w in windows}
    plan.validate_for(activities)
    fixed = replace(config, lr=1e-4, weight_decay=0.0, batch_size=256, epochs=50,
                    patience=5, unsafe_override=False)

    def run_group(group_idx: int) -> dict:
        group = plan.groups[group_idx]
        train_w, val_w, test_w = unseen_split_windows(
            windows, group, derive_seed(fixed.seed, "unseen", group_idx)
        )
        norm = fit_normalizer(train_w)
        train_n = apply_normalizer(norm, train_w)
        val_n = apply_normalizer(norm, val_w)
        test_n = apply_normalizer(norm, test_w)
        model = build_model(fixed, table=table, seed=derive_seed(fixed.seed, "group", group_idx))
        curves = pretrain(fixed, PretrainData(train_n, val_n, prompts), model)
        group_acts = sorted(group)
        sentences = class_sentences(prompts, group_acts, fixed.eval_policy, fixed.knowledge_mode)
        classes = build_class_embeddings(sentences, model, aggregate=fixed.aggregate)
        preds = zeroshot_classify(model.embed_windows(test_n).data, classes)
        detail = macro_f1_detail(preds, [w.label for w in test_n], set(group_acts))
        return {
            "group": group_idx,
            "activities": group_acts,
            "macro_f1": detail.macro_f1,
            "per_class_f1": detail.per_class_f1,
            "absent_classes": detail.absent_classes,
            "best_epoch": curves.best_epoch,
            "class_leak_audit": "ok",
        }

    records = _fold_records_parallel(list(range(len(plan.groups))), run_group)
    report = EvalReport(
        protocol="unseen-groups",
        config=asdict(fixed),
        data_hash=hash_windows(windows),
        seed=fixed.seed,
        folds=sorted(records, key=lambda r: r["group"]),
    )
    return report.finalize()


# --------------------------------------------------------------------------
# cross-modal retrieval
# --------------------------------------------------------------------------

def run_retrieval_eval(
    model: NlsModel,
    gallery: GalleryIndex,
    queries: list[SensorWindow],
    k: int = 5,
) -> EvalReport:
    """recall@k: fraction of query windows whose top-k retrieved items
    include at least one whose metadata label matches the query label."""
    if not queries:
        raise ValueError("queries must be nonempty")
    meta_by_id = {item_id: meta for item_id, _, meta in gallery.items}
    embeddings = model.embed_windows(queries).data
    hits = 0
    per_query = []
    for i, window in enumerate(queries):
        top = retrieve_topk(embeddings[i], gallery, k=k)
        hit = any(meta_by_id[item_id] == window.label for item_id, _ in top)
        hits += int(hit)
        per_query.append({"label": window.label, "hit": hit})
    recall = hits / len(queries)
    report = EvalReport(
        protocol="retrieval",
        config={"k": k},
        data_hash=hash_windows(queries),
        seed=0,
        extras={"recall_at_k": recall, "k": k, "num_queries": len(queries),
                "per_query": per_query},
    )
    return report.finalize()


# --------------------------------------------------------------------------
# supervised baseline
# --------------------------------------------------------------------------

def supervised_baseline(
    dataset: list[SensorSeries],
    config: TrainConfig,
    num_folds: int = 5,
    plan: FoldPlan | None = None,
) -> EvalReport:
    """Conv encoder + MLP classifier trained end-to-end per fold."""
    windows = prepare_windows(dataset)
    users = {w.user_id for w in windows}
    plan = plan or make_user_folds(users, num_folds=num_folds, seed=config.seed)
    activities = sorted({w.label for w in windows})

    def run_fold(fold_idx: int) -> dict:
        train_users, val_users, test_users = plan.folds[fold_idx]
        train_w = _split_by_users(windows, train_users)
        val_w = _split_by_users(windows, val_users)
        test_w = _split_by_users(windows, test_users)
        _audit_user_disjoint(fold_idx, train_w, val_w, test_w)
        norm = fit_normalizer(train_w)
        train_n = apply_normalizer(norm, train_w)
        val_n = apply_normalizer(norm, val_w)
        test_n = apply_normalizer(norm, test_w)
        clf = ConvClassifier(activities, seed=derive_seed(config.seed, "baseline", fold_idx))
        curves = train_classifier(clf, train_n, val_n, config)
        preds = clf.predict(test_n)
        detail = macro_f1_detail(preds, [w.label for w in test_n], set(activities))
        return {
            "fold": fold_idx,
            "macro_f1": detail.macro_f1,
            "per_class_f1": detail.per_class_f1,
            "absent_classes": detail.absent_classes,
            "test_users": sorted(test_users),
            "best_epoch": curves["best_epoch"],
            "user_audit": "ok",
        }

    records = _fold_records_parallel(list(range(len(plan.folds))), run_fold)
    report = EvalReport(
        protocol="supervised-baseline",
        config=asdict(config),
        data_hash=hash_windows(windows),
        seed=config.seed,
        folds=sorted(records, key=lambda r: r["fold"]),
    )
    return report.finalize()
