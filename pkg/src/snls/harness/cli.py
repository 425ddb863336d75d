"""Command-line interface.

Subcommands: synth, pretrain, eval-standard, eval-unseen, adapt,
fewshot, retrieve, baseline, report. Every run writes a JSON report
(and optional SVG plots). Exit codes: 0 success, 2 validation/usage
error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict

import numpy as np

from ..config import TrainConfig, UnseenGroupPlan, round_robin_plan, shipped_unseen_plan
from ..datapipe import (
    DomainShiftSpec,
    apply_normalizer,
    fit_normalizer,
    load_csv,
    save_csv,
    synth_generate,
)
from ..errors import ParseError, SchemaError
from ..inference import (
    AdaptConfig,
    adapt_projections,
    build_class_embeddings,
    fewshot_sweep,
    load_gallery,
    zeroshot_classify,
)
from ..metrics import macro_f1_detail
from ..prompts import class_sentences, default_prompt_set, load_corpus
from ..seeding import rng_for
from .checkpoint import load_checkpoint, save_checkpoint
from .evals import (
    build_model,
    prepare_windows,
    run_retrieval_eval,
    run_standard_eval,
    run_unseen_eval,
    supervised_baseline,
)
from .report import EvalReport, hash_windows, render_report_text
from .svg import fewshot_curve_svg, loss_curves_svg, per_class_f1_svg
from .train import PretrainData, pretrain


def _load_prompts(args) -> "PromptSet":
    prompts = default_prompt_set()
    if getattr(args, "corpus", None):
        prompts.corpus = load_corpus(args.corpus)
    return prompts


def _split_users_for_pretrain(windows, seed: int):
    users = sorted({w.user_id for w in windows})
    if len(users) < 2:
        raise ValueError("pre-training needs at least 2 users (train/val split)")
    order = [users[i] for i in rng_for(seed, "pretrain-split").permutation(len(users))]
    n_val = max(1, math.ceil(0.2 * len(order)))
    val_users = set(order[:n_val])
    train = [w for w in windows if w.user_id not in val_users]
    val = [w for w in windows if w.user_id in val_users]
    return train, val


def _model_from_checkpoint(path: str):
    params, trailer = load_checkpoint(path)
    config = TrainConfig(**trailer["config"])
    model = build_model(config, seed=config.seed)
    model.load_state_dict(params)
    return model, config, trailer


def _write_report(report: EvalReport, path: str) -> None:
    report.save(path)
    print(f"wrote {path}")


# --------------------------------------------------------------------------
# subcommand implementations
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    shift = DomainShiftSpec(
        gain=args.gain,
        channel_permutation=tuple(int(x) for x in args.permute.split(",")) if args.permute else None,
        bias=tuple(float(x) for x in args.bias.split(",")) if args.bias else (0.0, 0.0, 0.0),
    )
    series = synth_generate(
        num_classes=args.classes,
        users_per_class=args.users,
        windows_per_user=args.windows,
        shift=shift,
        seed=args.seed,
        noise_sigma=args.sigma,
    )
    save_csv(args.out, series)
    meta = {
        "num_classes": args.classes,
        "users_per_class": args.users,
        "windows_per_user": args.windows,
        "noise_sigma": args.sigma,
        "seed": args.seed,
        "shift": shift.to_json_dict(),
    }
    meta_path = args.out + ".meta.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    print(f"wrote {args.out} and {meta_path}")
    return 0


def cmd_pretrain(args) -> int:
    config = TrainConfig.from_file(args.config)
    prompts = _load_prompts(args)
    windows = prepare_windows(load_csv(args.data))
    train_w, val_w = _split_users_for_pretrain(windows, config.seed)
    norm = fit_normalizer(train_w)
    train_n = apply_normalizer(norm, train_w)
    val_n = apply_normalizer(norm, val_w)
    model = build_model(config)
    curves = pretrain(config, PretrainData(train_n, val_n, prompts), model)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "model.snlsckpt")
    trailer = {
        "config": asdict(config),
        "normalizer": {"mean": norm.mean.tolist(), "std": norm.std.tolist()},
    }
    save_checkpoint(ckpt_path, model.state_dict(), trailer)
    curves_path = os.path.join(args.out, "curves.json")
    with open(curves_path, "w", encoding="utf-8") as fh:
        json.dump(curves.curves(), fh, indent=2, sort_keys=True)
    with open(os.path.join(args.out, "curves.svg"), "w", encoding="utf-8") as fh:
        fh.write(loss_curves_svg(curves.train_losses, curves.val_losses))
    print(f"wrote {ckpt_path} and {curves_path}")
    return 0


def cmd_eval_standard(args) -> int:
    config = TrainConfig.from_file(args.config)
    prompts = _load_prompts(args)
    report = run_standard_eval(load_csv(args.data), config, prompt_set=prompts,
                               num_folds=args.folds)
    _write_report(report, args.out)
    if args.plot:
        merged: dict[str, float] = {}
        for fold in report.folds:
            for cls, f1 in fold["per_class_f1"].items():
                merged[cls] = merged.get(cls, 0.0) + f1 / len(report.folds)
        with open(args.plot, "w", encoding="utf-8") as fh:
            fh.write(per_class_f1_svg(merged, title="mean per-class F1 across folds"))
    return 0


def cmd_eval_unseen(args) -> int:
    config = TrainConfig.from_file(args.config)
    prompts = _load_prompts(args)
    series = load_csv(args.data)
    if args.plan:
        with open(args.plan, encoding="utf-8") as fh:
            plan = UnseenGroupPlan.from_json(fh.read())
    elif args.plan_dataset:
        plan = shipped_unseen_plan(args.plan_dataset)
    else:
        activities = sorted({lab for s in series for lab in s.labels})
        plan = round_robin_plan(activities, args.groups)
    report = run_unseen_eval(series, plan, config, prompt_set=prompts)
    _write_report(report, args.out)
    return 0


def cmd_adapt(args) -> int:
    model, config, _ = _model_from_checkpoint(args.checkpoint)
    prompts = _load_prompts(args)
    windows = prepare_windows(load_csv(args.data))
    from ..datapipe import make_user_folds

    plan = make_user_folds({w.user_id for w in windows}, num_folds=5, seed=config.seed)
    train_users, val_users, test_users = plan.folds[0]
    train_w = [w for w in windows if w.user_id in train_users]
    val_w = [w for w in windows if w.user_id in val_users]
    test_w = [w for w in windows if w.user_id in test_users]
    norm = fit_normalizer(train_w)
    train_n, val_n, test_n = (apply_normalizer(norm, ws) for ws in (train_w, val_w, test_w))
    activities = sorted({w.label for w in windows})

    def test_score() -> float:
        sentences = class_sentences(prompts, activities, config.eval_policy,
                                    config.knowledge_mode)
        classes = build_class_embeddings(sentences, model, aggregate=config.aggregate)
        preds = zeroshot_classify(model.embed_windows(test_n).data, classes)
        return macro_f1_detail(preds, [w.label for w in test_n], set(activities)).macro_f1

    before = test_score()
    hyper = AdaptConfig(lr=config.lr, weight_decay=config.weight_decay,
                        batch_size=config.batch_size, epochs=config.epochs,
                        patience=config.patience, train_policy=config.train_policy,
                        knowledge_mode=config.knowledge_mode, seed=config.seed)
    result = adapt_projections(model, train_n, val_n, hyper, prompts)
    after = test_score()
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "adapted.snlsckpt")
    save_checkpoint(ckpt_path, model.state_dict(), {"config": asdict(config)})
    report = EvalReport(
        protocol="adaptation",
        config=asdict(config),
        data_hash=hash_windows(windows),
        seed=config.seed,
        extras={
            "macro_f1_before": before,
            "macro_f1_after": after,
            "best_epoch": result.best_epoch,
            "used_train_as_val": result.used_train_as_val,
        },
    ).finalize()
    _write_report(report, os.path.join(args.out, "adapt_report.json"))
    print(f"wrote {ckpt_path}")
    return 0


def cmd_fewshot(args) -> int:
    model, config, _ = _model_from_checkpoint(args.checkpoint)
    prompts = _load_prompts(args)
    windows = prepare_windows(load_csv(args.data))
    from ..datapipe import make_user_folds

    plan = make_user_folds({w.user_id for w in windows}, num_folds=5, seed=config.seed)
    train_users, _, test_users = plan.folds[0]
    train_w = [w for w in windows if w.user_id in train_users]
    test_w = [w for w in windows if w.user_id in test_users]
    norm = fit_normalizer(train_w)
    train_n = apply_normalizer(norm, train_w)
    test_n = apply_normalizer(norm, test_w)
    shots = [int(s) for s in args.shots.split(",")]
    hyper = AdaptConfig(lr=config.lr, weight_decay=config.weight_decay,
                        batch_size=config.batch_size, epochs=config.epochs,
                        patience=config.patience, train_policy=config.train_policy,
                        knowledge_mode=config.knowledge_mode, seed=config.seed)
    levels = fewshot_sweep(model, train_n, test_n, prompts, hyper, shots=shots,
                           runs=args.runs, seed=config.seed,
                           eval_policy=config.eval_policy, aggregate=config.aggregate)
    rows = [
        {"shot": lv.shot, "mean": lv.mean, "std": lv.std, "scores": lv.scores,
         "skipped": lv.skipped, "reason": lv.reason}
        for lv in levels
    ]
    report = EvalReport(
        protocol="fewshot-sweep",
        config=asdict(config),
        data_hash=hash_windows(windows),
        seed=config.seed,
        extras={"levels": rows, "runs": args.runs},
    ).finalize()
    _write_report(report, args.out)
    if args.plot:
        live = [lv for lv in levels if not lv.skipped]
        with open(args.plot, "w", encoding="utf-8") as fh:
            fh.write(fewshot_curve_svg([lv.shot for lv in live],
                                       [lv.mean for lv in live],
                                       [lv.std for lv in live]))
    for lv in levels:
        status = "skipped" if lv.skipped else f"{lv.mean:.4f} +/- {lv.std:.4f}"
        print(f"shots={lv.shot}: {status}")
    return 0


def cmd_retrieve(args) -> int:
    model, config, trailer = _model_from_checkpoint(args.checkpoint)
    gallery = load_gallery(args.gallery)
    windows = prepare_windows(load_csv(args.data))
    if "normalizer" in trailer:
        from ..datapipe import Normalizer

        norm = Normalizer(mean=np.array(trailer["normalizer"]["mean"]),
                          std=np.array(trailer["normalizer"]["std"]))
        windows = apply_normalizer(norm, windows)
    report = run_retrieval_eval(model, gallery, windows, k=args.k)
    _write_report(report, args.out)
    print(f"recall@{args.k} = {report.extras['recall_at_k']:.4f}")
    return 0


def cmd_baseline(args) -> int:
    config = TrainConfig.from_file(args.config)
    report = supervised_baseline(load_csv(args.data), config, num_folds=args.folds)
    _write_report(report, args.out)
    return 0


def cmd_report(args) -> int:
    with open(args.infile, encoding="utf-8") as fh:
        payload = json.load(fh)
    print(render_report_text(payload))
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snls",
                                     description="sensor-language activity recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--windows", type=int, default=6)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--permute", default="", help="channel permutation, e.g. 1,2,0")
    p.add_argument("--bias", default="", help="per-channel bias, e.g. 0.1,0,0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="contrastive pre-training")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--corpus", default="")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("eval-standard", help="five-fold zero-shot evaluation")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--plot", default="")
    p.add_argument("--corpus", default="")
    p.set_defaults(func=cmd_eval_standard)

    p = sub.add_parser("eval-unseen", help="unseen-activity group evaluation")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plan", default="", help="JSON group plan; omit to use round-robin")
    p.add_argument("--plan-dataset", default="",
                   help="use the shipped plan for a named dataset (e.g. hhar, pamap2)")
    p.add_argument("--groups", type=int, default=3)
    p.add_argument("--corpus", default="")
    p.set_defaults(func=cmd_eval_unseen)

    p = sub.add_parser("adapt", help="adapt projection heads on target data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--corpus", default="")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("fewshot", help="few-shot adaptation sweep")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--shots", default="2,5,10,25,50,100")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--plot", default="")
    p.add_argument("--corpus", default="")
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("retrieve", help="cross-modal retrieval against a gallery")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("baseline", help="supervised conv classifier baseline")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("report", help="render a JSON report as text")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, SchemaError, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
