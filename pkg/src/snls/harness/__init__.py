"""Orchestration: training, evaluation protocols, metrics, checkpoints,
reports, and the CLI."""

from ..config import TrainConfig, UnseenGroupPlan, round_robin_plan
from ..metrics import MacroF1Detail, macro_f1, macro_f1_detail
from .baseline import ConvClassifier, train_classifier
from .checkpoint import load_checkpoint, save_checkpoint
from .evals import (
    build_model,
    prepare_windows,
    run_retrieval_eval,
    run_standard_eval,
    run_unseen_eval,
    supervised_baseline,
    unseen_split_windows,
)
from .report import EvalReport, hash_windows, render_report_text
from .train import PretrainData, PretrainResult, pretrain

__all__ = [
    "ConvClassifier",
    "EvalReport",
    "MacroF1Detail",
    "PretrainData",
    "PretrainResult",
    "TrainConfig",
    "UnseenGroupPlan",
    "build_model",
    "hash_windows",
    "load_checkpoint",
    "macro_f1",
    "macro_f1_detail",
    "prepare_windows",
    "pretrain",
    "render_report_text",
    "round_robin_plan",
    "run_retrieval_eval",
    "run_standard_eval",
    "run_unseen_eval",
    "save_checkpoint",
    "supervised_baseline",
    "train_classifier",
    "unseen_split_windows",
]
