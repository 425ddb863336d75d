"""Acceptance suite: one test per gate criterion, each printing a
PASS/FAIL line with its measured values (run with -s to see them live).
"""

import math
import time

import numpy as np
import pytest

from snls import numerics as nm
from snls.config import TrainConfig, round_robin_plan
from snls.datapipe import (
    DomainShiftSpec,
    apply_normalizer,
    fit_normalizer,
    make_user_folds,
    synth_generate,
)
from snls.encoders import ImuEncoder, ProjectionHead
from snls.harness import macro_f1, pretrain, save_checkpoint
from snls.harness.evals import (
    build_model,
    prepare_windows,
    run_retrieval_eval,
    run_standard_eval,
    unseen_split_windows,
)
from snls.harness.train import PretrainData
from snls.inference import (
    AdaptConfig,
    GalleryIndex,
    adapt_projections,
    build_class_embeddings,
    fewshot_sweep,
    retrieve_topk,
    zeroshot_classify,
)
from snls.metrics import macro_f1_detail
from snls.numerics import AdamState, Tensor, adam_step, grad_check
from snls.objectives import (
    EmbeddingBatch,
    SimilarityMatrix,
    TemperatureParam,
    clip_loss,
    nt_xent,
    similarity_matrix,
    slip_loss,
    unicl_loss,
    unicl_target_matrix,
)
from snls.prompts import PromptSet, class_sentences, default_prompt_set, render


def report(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def t64(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


# ---------------------------------------------------------------------------
# shared experiment fixtures
# ---------------------------------------------------------------------------

HET_SEED = 11
SHIFT = DomainShiftSpec(gain=2.0, channel_permutation=(1, 2, 0))


@pytest.fixture(scope="module")
def hetero_setup():
    """Source model pre-trained on clean synthetic data, plus the shifted
    twin dataset split the same way by user."""
    source = synth_generate(8, 20, 8, seed=HET_SEED, noise_sigma=0.05)
    target = synth_generate(8, 20, 8, seed=HET_SEED, noise_sigma=0.05, shift=SHIFT)
    src_w, tgt_w = prepare_windows(source), prepare_windows(target)
    users = sorted({w.user_id for w in src_w})
    order = [users[i] for i in np.random.default_rng(99).permutation(len(users))]
    train_u, val_u, test_u = set(order[:14]), set(order[14:17]), set(order[17:])

    def pick(ws, us):
        return [w for w in ws if w.user_id in us]

    src_train, src_val, src_test = (pick(src_w, u) for u in (train_u, val_u, test_u))
    src_norm = fit_normalizer(src_train)
    config = TrainConfig(lr=1e-3, weight_decay=0.0, batch_size=128, seed=HET_SEED)
    prompts = default_prompt_set()
    model = build_model(config, seed=HET_SEED)
    pretrain(config, PretrainData(apply_normalizer(src_norm, src_train),
                                  apply_normalizer(src_norm, src_val), prompts), model)

    tgt_train, tgt_val, tgt_test = (pick(tgt_w, u) for u in (train_u, val_u, test_u))
    tgt_norm = fit_normalizer(tgt_train)
    return {
        "model": model,
        "config": config,
        "prompts": prompts,
        "activities": sorted({w.label for w in src_w}),
        "src_test": apply_normalizer(src_norm, src_test),
        "src_eval_pool": apply_normalizer(src_norm, src_train),
        "tgt_train": apply_normalizer(tgt_norm, tgt_train),
        "tgt_val": apply_normalizer(tgt_norm, tgt_val),
        "tgt_test": apply_normalizer(tgt_norm, tgt_test),
    }


def zero_shot_f1(model, prompts, activities, windows):
    sentences = class_sentences(prompts, activities, "base")
    classes = build_class_embeddings(sentences, model, aggregate="mean")
    preds = zeroshot_classify(model.embed_windows(windows).data, classes)
    return macro_f1_detail(preds, [w.label for w in windows], set(activities)).macro_f1


# ---------------------------------------------------------------------------
# criterion 1: gradient suite
# ---------------------------------------------------------------------------

class TestGradientSuite:
    def test_gradient_suite_under_60s(self):
        start = time.monotonic()
        rng = np.random.default_rng(0)
        errors: dict[str, float] = {}

        def xent_of(x, n, m):
            return nm.softmax_xent_rows(x, np.full((n, m), 1.0 / m))

        # individual ops
        x, w, b = t64(rng.normal(size=(2, 3, 8))), t64(rng.normal(size=(4, 3, 3))), t64(rng.normal(size=4))
        errors["conv1d"] = grad_check(
            lambda *_: xent_of(nm.max_over_time(nm.conv1d(x, w, b)), 2, 4), [x, w, b])
        xl, wl, bl = t64(rng.normal(size=(3, 5))), t64(rng.normal(size=(2, 5))), t64(rng.normal(size=2))
        errors["linear"] = grad_check(
            lambda *_: xent_of(nm.linear(xl, wl, bl), 3, 2), [xl, wl, bl])
        raw = rng.normal(size=(3, 4))
        xr = t64(raw + np.sign(raw) * 0.05)
        errors["relu"] = grad_check(lambda *_: xent_of(nm.relu(xr), 3, 4), [xr])
        xd = t64(rng.normal(size=(3, 5)))
        errors["dropout"] = grad_check(
            lambda *_: xent_of(nm.dropout(xd, 0.4, True, seed=3), 3, 5), [xd])
        xm = t64(rng.permutation(24).reshape(2, 3, 4) * 0.31)
        errors["max_over_time"] = grad_check(
            lambda *_: xent_of(nm.max_over_time(xm), 2, 3), [xm])
        xs = t64(rng.normal(size=(4, 4)))
        errors["softmax_xent"] = grad_check(
            lambda *_: nm.softmax_xent_rows(xs, np.eye(4)), [xs])
        xsum = t64(rng.normal(size=(3, 4)))
        errors["sum_all"] = grad_check(lambda *_: nm.sum_all(xsum), [xsum])
        xb, gb_, bb = t64(rng.normal(size=(6, 4))), t64(np.abs(rng.normal(size=4)) + 0.5), t64(rng.normal(size=4))
        errors["batchnorm"] = grad_check(
            lambda *_: xent_of(nm.batchnorm(xb, gb_, bb, nm.BatchNormState(4), True), 6, 4),
            [xb, gb_, bb])

        # losses through the full similarity pipeline
        labels4 = list("abcd")
        s4, t4_, ls = t64(rng.normal(size=(4, 6))), t64(rng.normal(size=(4, 6))), t64(np.float64(np.log(1 / 0.07)))

        def with_temp(fn):
            def inner(*_):
                temp = TemperatureParam()
                temp.log_scale = ls
                sim = similarity_matrix(EmbeddingBatch(S=s4, T=t4_, labels=labels4), temp)
                return fn(sim)
            return inner

        errors["clip_loss"] = grad_check(with_temp(clip_loss), [s4, t4_, ls])
        dup_labels = ["a", "a", "b", "c"]

        def unicl_fn(*_):
            temp = TemperatureParam()
            temp.log_scale = ls
            sim = similarity_matrix(EmbeddingBatch(S=s4, T=t4_, labels=dup_labels), temp)
            return unicl_loss(sim, unicl_target_matrix(dup_labels))

        errors["unicl_loss"] = grad_check(unicl_fn, [s4, t4_, ls])
        z1, z2 = t64(rng.normal(size=(3, 5))), t64(rng.normal(size=(3, 5)))
        errors["nt_xent"] = grad_check(lambda *_: nt_xent(z1, z2, 0.1), [z1, z2])
        zs1, zs2 = t64(rng.normal(size=(4, 5))), t64(rng.normal(size=(4, 5)))
        errors["slip_loss"] = grad_check(
            with_temp(lambda sim: slip_loss(sim, zs1, zs2, lam=0.5)), [s4, t4_, ls, zs1, zs2])

        op_worst = max(errors.values())

        # full model: encoder + heads + similarity + clip on a 4-window batch
        enc = ImuEncoder(seed=1, dtype=np.float64)
        sensor_head = ProjectionHead(128, out_dim=12, hidden_dim=12, seed=2, dtype=np.float64)
        text_head = ProjectionHead(6, out_dim=12, hidden_dim=12, seed=3, dtype=np.float64)
        xw = Tensor(rng.normal(size=(4, 3, 100)), requires_grad=True, dtype=np.float64)
        tx = t64(rng.normal(size=(4, 6)))
        lsf = t64(np.float64(np.log(1 / 0.07)))
        params = [xw, tx, lsf, *enc.params.values(), *sensor_head.params.values(),
                  *text_head.params.values()]

        def full_model(*_):
            feats = enc.forward(xw, training=True, seed=5)
            s = sensor_head.forward(feats)
            t = text_head.forward(tx)
            temp = TemperatureParam()
            temp.log_scale = lsf
            sim = similarity_matrix(EmbeddingBatch(S=s, T=t, labels=labels4), temp)
            return clip_loss(sim)

        full_err = grad_check(full_model, params, h=1e-7, max_coords=25, atol=1e-7)
        elapsed = time.monotonic() - start

        ok = op_worst < 1e-4 and full_err < 1e-3 and elapsed < 60
        report("gradient-suite", ok,
               f"worst op rel err {op_worst:.2e}, full model {full_err:.2e}, {elapsed:.1f}s")
        assert op_worst < 1e-4, errors
        assert full_err < 1e-3
        assert elapsed < 60


# ---------------------------------------------------------------------------
# criterion 2: loss anchors
# ---------------------------------------------------------------------------

class TestLossAnchors:
    def test_loss_anchors(self):
        devs = []
        for n in (2, 8, 64):
            sim = SimilarityMatrix(C=Tensor(np.full((n, n), 0.37)), tau=1.0)
            devs.append(abs(clip_loss(sim).item() - math.log(n)))
        saturated = clip_loss(SimilarityMatrix(C=Tensor(1000.0 * np.eye(8)), tau=1.0)).item()
        rng = np.random.default_rng(1)
        sim = similarity_matrix(
            EmbeddingBatch(S=t64(rng.normal(size=(4, 6))), T=t64(rng.normal(size=(4, 6))),
                           labels=list("wxyz")), TemperatureParam())
        unicl_gap = abs(unicl_loss(sim, unicl_target_matrix(list("wxyz"))).item()
                        - clip_loss(sim).item())
        ok = max(devs) < 1e-6 and abs(saturated) < 1e-6 and unicl_gap < 1e-7
        report("loss-anchors", ok,
               f"lnN dev {max(devs):.2e}, saturated {abs(saturated):.2e}, "
               f"unicl gap {unicl_gap:.2e}")
        assert max(devs) < 1e-6
        assert abs(saturated) < 1e-6
        assert unicl_gap < 1e-7


# ---------------------------------------------------------------------------
# criterion 3: temperature
# ---------------------------------------------------------------------------

class TestTemperature:
    def test_temperature_init_and_clamp(self):
        temp = TemperatureParam()
        init_dev = abs(temp.applied_scale - 1 / 0.07)
        # adversarial ascent: feed a constant gradient pushing log-scale up
        state = AdamState(lr=0.5)
        max_applied = temp.applied_scale
        for _ in range(200):
            adam_step([temp.log_scale], [np.asarray(-1.0)], state)
            max_applied = max(max_applied, temp.applied_scale)
        ok = init_dev < 1e-6 and max_applied <= 100.0
        report("temperature", ok,
               f"init dev {init_dev:.2e}, max applied under ascent {max_applied:.6f}")
        assert init_dev < 1e-6
        assert max_applied <= 100.0
        assert temp.applied_scale > 0


# ---------------------------------------------------------------------------
# criterion 4: protocol audits
# ---------------------------------------------------------------------------

class TestProtocolAudits:
    def test_fold_plans_never_leak_users(self):
        rng = np.random.default_rng(2)
        for trial in range(1000):
            n_users = int(rng.integers(5, 40))
            users = {f"u{i}" for i in range(n_users)}
            plan = make_user_folds(users, num_folds=5, seed=trial)
            tested = []
            for train, val, test in plan.folds:
                assert not (train & val or train & test or val & test)
                tested.extend(test)
            assert sorted(tested) == sorted(users)
        report("protocol-audit-folds", True, "1000 plans, zero user leakage")

    def test_unseen_plans_never_leak_classes(self):
        windows = prepare_windows(synth_generate(12, 4, 2, seed=3, noise_sigma=0.0))
        activities = sorted({w.label for w in windows})
        rng = np.random.default_rng(4)
        checked = 0
        for trial in range(200):
            k = int(rng.integers(3, 6))
            order = [activities[i] for i in rng.permutation(len(activities))]
            plan = round_robin_plan(order, k)
            for g_idx, group in enumerate(plan.groups):
                train, val, test = unseen_split_windows(windows, group, seed=trial)
                assert not ({w.label for w in train} & group)
                assert not ({w.label for w in val} & group)
                assert {w.label for w in test} == group
            checked += 1
        report("protocol-audit-unseen", True, f"{checked} plans, zero class leakage")


# ---------------------------------------------------------------------------
# criterion 5: synthetic end-to-end
# ---------------------------------------------------------------------------

class TestSyntheticEndToEnd:
    def test_standard_eval_reaches_090_under_5min(self):
        start = time.monotonic()
        series = synth_generate(8, 20, 6, seed=7, noise_sigma=0.05)
        config = TrainConfig(lr=1e-3, weight_decay=0.0, batch_size=128, seed=7)
        result = run_standard_eval(series, config)
        elapsed = time.monotonic() - start
        ok = result.mean_macro_f1 >= 0.90 and elapsed < 300
        report("synthetic-end-to-end", ok,
               f"mean macro-F1 {result.mean_macro_f1:.4f} over 5 folds, {elapsed:.0f}s")
        assert result.mean_macro_f1 >= 0.90
        assert elapsed < 300


# ---------------------------------------------------------------------------
# criterion 6: heterogeneity + adaptation direction
# ---------------------------------------------------------------------------

class TestHeterogeneityAdaptation:
    def test_shift_drop_and_adaptation_recovery(self, hetero_setup):
        ctx = hetero_setup
        model, prompts, acts = ctx["model"], ctx["prompts"], ctx["activities"]
        saved = {n: p.data.copy() for n, p in model.projection_parameters().items()}
        f1_unshifted = zero_shot_f1(model, prompts, acts, ctx["src_test"])
        f1_shifted = zero_shot_f1(model, prompts, acts, ctx["tgt_test"])
        drop = f1_unshifted - f1_shifted
        hyper = AdaptConfig(lr=1e-3, batch_size=128, epochs=50, patience=5, seed=HET_SEED)
        adapt_projections(model, ctx["tgt_train"], ctx["tgt_val"], hyper, prompts)
        f1_adapted = zero_shot_f1(model, prompts, acts, ctx["tgt_test"])
        recovery = f1_adapted - f1_shifted
        for n, p in model.projection_parameters().items():  # restore for later tests
            p.data = saved[n].copy()
        ok = drop >= 0.15 and recovery >= 0.10
        report("heterogeneity-adaptation", ok,
               f"unshifted {f1_unshifted:.3f}, shifted {f1_shifted:.3f} "
               f"(drop {drop:.3f}), adapted {f1_adapted:.3f} (recovery {recovery:.3f})")
        assert drop >= 0.15
        assert recovery >= 0.10

    def test_fewshot_trend_100_vs_2(self, hetero_setup):
        ctx = hetero_setup
        hyper = AdaptConfig(lr=1e-3, batch_size=128, epochs=50, patience=5, seed=HET_SEED)
        levels = fewshot_sweep(ctx["model"], ctx["tgt_train"], ctx["tgt_test"],
                               ctx["prompts"], hyper, shots=[2, 5, 10, 25, 50, 100],
                               runs=5, seed=HET_SEED)
        by_shot = {lv.shot: lv for lv in levels}
        assert not by_shot[2].skipped and not by_shot[100].skipped
        ok = by_shot[100].mean >= by_shot[2].mean
        report("fewshot-trend", ok,
               f"mean F1 at 100 shots {by_shot[100].mean:.3f} vs 2 shots "
               f"{by_shot[2].mean:.3f} over 5 runs")
        assert by_shot[100].mean >= by_shot[2].mean


# ---------------------------------------------------------------------------
# criterion 7: prompt-diversity direction
# ---------------------------------------------------------------------------

VARIANT_TEMPLATE_IDS = ["base", "hc1", "hc3", "hc4", "gen16", "gen21"]


def template_derived_corpus(prompt_set: PromptSet, activities: list[str]) -> dict:
    """>= 5 diversified variants per class, rendered from distinct templates
    (the stand-in for paraphrase corpora at desk scale)."""
    return {a: [render(prompt_set.template_by_id(tid), a) for tid in VARIANT_TEMPLATE_IDS]
            for a in activities}


class TestPromptDiversity:
    def _run(self, seed: int, policy: str) -> float:
        series = synth_generate(8, 10, 4, seed=200 + seed, noise_sigma=0.05)
        windows = prepare_windows(series)
        users = sorted({w.user_id for w in windows})
        order = [users[i] for i in np.random.default_rng(seed).permutation(len(users))]
        picks = (set(order[:6]), set(order[6:8]), set(order[8:]))
        train, val, test = ([w for w in windows if w.user_id in us] for us in picks)
        norm = fit_normalizer(train)
        train_n, val_n, test_n = (apply_normalizer(norm, x) for x in (train, val, test))
        activities = sorted({w.label for w in windows})
        base = default_prompt_set()
        prompts = PromptSet(templates=base.templates, knowledge=base.knowledge,
                            corpus=template_derived_corpus(base, activities))
        config = TrainConfig(lr=1e-3, batch_size=128, seed=seed, train_policy=policy)
        model = build_model(config, seed=seed)
        pretrain(config, PretrainData(train_n, val_n, prompts), model)
        return zero_shot_f1(model, prompts, activities, test_n)

    def test_corpus_training_non_inferior(self):
        base_scores = [self._run(seed, "base_only") for seed in range(5)]
        corpus_scores = [self._run(seed, "random_corpus") for seed in range(5)]
        base_mean = float(np.mean(base_scores))
        corpus_mean = float(np.mean(corpus_scores))
        ok = corpus_mean >= base_mean - 0.02
        report("prompt-diversity", ok,
               f"corpus mean {corpus_mean:.4f} vs base mean {base_mean:.4f} over 5 seeds")
        assert corpus_mean >= base_mean - 0.02


# ---------------------------------------------------------------------------
# criterion 8: retrieval
# ---------------------------------------------------------------------------

class TestRetrieval:
    def test_self_gallery_recall_at_1(self, hetero_setup):
        ctx = hetero_setup
        queries = ctx["src_eval_pool"][:64]
        emb = ctx["model"].embed_windows(queries).data.astype(np.float32)
        items = [(f"q{i:04d}", emb[i], queries[i].label) for i in range(len(queries))]
        gallery = GalleryIndex(items=items, dim=emb.shape[1])
        result = run_retrieval_eval(ctx["model"], gallery, queries, k=1)
        recall1 = result.extras["recall_at_k"]
        report("retrieval-self", recall1 == 1.0, f"self-gallery recall@1 {recall1:.3f}")
        assert recall1 == 1.0

    def test_paired_text_gallery_recall_at_5(self, hetero_setup):
        ctx = hetero_setup
        model, prompts, acts = ctx["model"], ctx["prompts"], ctx["activities"]
        queries = ctx["src_eval_pool"]
        sentences = {a: render(prompts.base_template, a) for a in acts}
        text_emb = {a: model.embed_sentences([s]).data[0].astype(np.float32)
                    for a, s in sentences.items()}
        items = [(f"g{i:05d}", text_emb[w.label], w.label) for i, w in enumerate(queries)]
        gallery = GalleryIndex(items=items, dim=len(next(iter(text_emb.values()))))
        result = run_retrieval_eval(model, gallery, queries, k=5)
        recall5 = result.extras["recall_at_k"]
        report("retrieval-paired-text", recall5 >= 0.95,
               f"paired-text recall@5 {recall5:.4f} on {len(queries)} queries")
        assert recall5 >= 0.95

    def test_topk_matches_brute_force_on_1000_galleries(self):
        rng = np.random.default_rng(5)
        for trial in range(1000):
            n = int(rng.integers(2, 12))
            dim = int(rng.integers(2, 8))
            items = [(f"i{j:03d}", rng.normal(size=dim).astype(np.float32), "m")
                     for j in range(n)]
            gallery = GalleryIndex(items=items, dim=dim)
            query = rng.normal(size=dim)
            k = int(rng.integers(1, 7))
            got = retrieve_topk(query, gallery, k=k)
            brute = []
            qn = np.linalg.norm(query)
            for item_id, vec, _ in items:
                v = vec.astype(np.float64)
                brute.append((item_id, float(query @ v / (qn * np.linalg.norm(v)))))
            brute.sort(key=lambda p: (-p[1], p[0]))
            assert [i for i, _ in got] == [i for i, _ in brute[:k]]
        report("retrieval-oracle", True, "1000 random galleries match brute-force sort")


# ---------------------------------------------------------------------------
# criterion 9: metric oracle
# ---------------------------------------------------------------------------

def brute_force_macro_f1(preds, truths, classes):
    scores = []
    for c in classes:
        tp = sum(1 for p, t in zip(preds, truths) if p == c and t == c)
        fp = sum(1 for p, t in zip(preds, truths) if p == c and t != c)
        fn = sum(1 for p, t in zip(preds, truths) if p != c and t == c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * precision * recall / (precision + recall)
                      if precision + recall else 0.0)
    return sum(scores) / len(scores)


class TestMetricOracle:
    def test_macro_f1_matches_confusion_oracle_1000x(self):
        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(1000):
            k = int(rng.integers(2, 8))
            classes = [f"c{i}" for i in range(k)]
            n = int(rng.integers(1, 60))
            truths = [classes[i] for i in rng.integers(k, size=n)]
            preds = [classes[i] for i in rng.integers(k, size=n)]
            got = macro_f1(preds, truths, set(classes))
            expected = brute_force_macro_f1(preds, truths, sorted(classes))
            worst = max(worst, abs(got - expected))
        report("metric-oracle", worst < 1e-9, f"1000 random sets, max dev {worst:.2e}")
        assert worst < 1e-9


# ---------------------------------------------------------------------------
# criterion 10: determinism
# ---------------------------------------------------------------------------

class TestDeterminism:
    def _checkpoint_bytes(self) -> bytes:
        series = synth_generate(3, 6, 3, seed=77, noise_sigma=0.05)
        windows = prepare_windows(series)
        users = sorted({w.user_id for w in windows})
        train = [w for w in windows if w.user_id in users[:4]]
        val = [w for w in windows if w.user_id in users[4:]]
        norm = fit_normalizer(train)
        config = TrainConfig(lr=1e-3, batch_size=128, epochs=4, patience=5,
                             unsafe_override=True, seed=13)
        model = build_model(config)
        pretrain(config, PretrainData(apply_normalizer(norm, train),
                                      apply_normalizer(norm, val),
                                      default_prompt_set()), model)
        import os
        import tempfile

        fd, path = tempfile.mkstemp(suffix=".snlsckpt")
        os.close(fd)
        try:
            save_checkpoint(path, model.state_dict(), {"seed": 13})
            with open(path, "rb") as fh:
                return fh.read()
        finally:
            os.unlink(path)

    def test_checkpoints_byte_identical(self):
        a, b = self._checkpoint_bytes(), self._checkpoint_bytes()
        report("determinism-checkpoint", a == b,
               f"two runs, {len(a)} byte checkpoints {'identical' if a == b else 'differ'}")
        assert a == b

    def test_reports_byte_identical(self):
        series = synth_generate(3, 6, 2, seed=78, noise_sigma=0.05)
        config = TrainConfig(lr=1e-3, batch_size=128, epochs=2, patience=5,
                             unsafe_override=True, seed=14)
        a = run_standard_eval(series, config, num_folds=3).to_json()
        b = run_standard_eval(series, config, num_folds=3).to_json()
        report("determinism-report", a == b,
               "two standard-eval runs serialize identically" if a == b else "reports differ")
        assert a == b
