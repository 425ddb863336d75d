"""Classification metrics. Macro F1 is the primary score: the
unweighted mean of per-class F1, robust to class imbalance.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class MacroF1Detail:
    macro_f1: float
    per_class_f1: dict[str, float]
    absent_classes: list[str] = field(default_factory=list)


def macro_f1_detail(
    predictions: list[str],
    truths: list[str],
    classes: set[str],
) -> MacroF1Detail:
    """Per-class and macro F1 with flags for classes absent from both sides.

    A class with no true and no predicted instances contributes F1 = 0;
    per-class F1 is 0 whenever precision + recall is 0.
    """
    if not classes:
        raise ValueError("class set must be nonempty")
    if len(predictions) != len(truths) or not truths:
        raise ValueError("predictions and truths must be equal-length and nonempty")
    unknown = set(truths) - set(classes)
    if unknown:
        raise ValueError(f"truth labels outside the class set: {sorted(unknown)}")
    tp: dict[str, int] = {c: 0 for c in classes}
    fp: dict[str, int] = {c: 0 for c in classes}
    fn: dict[str, int] = {c: 0 for c in classes}
    for pred, truth in zip(predictions, truths):
        if pred == truth:
            tp[truth] += 1
        else:
            fn[truth] += 1
            if pred in tp:
                fp[pred] += 1
    per_class: dict[str, float] = {}
    absent: list[str] = []
    for c in sorted(classes):
        denom = 2 * tp[c] + fp[c] + fn[c]
        per_class[c] = (2.0 * tp[c] / denom) if denom > 0 else 0.0
        if tp[c] + fp[c] + fn[c] == 0:
            absent.append(c)
    macro = sum(per_class.values()) / len(per_class)
    return MacroF1Detail(macro_f1=macro, per_class_f1=per_class, absent_classes=absent)


def macro_f1(predictions: list[str], truths: list[str], classes: set[str]) -> float:
    """Unweighted mean of per-class F1 over the given class set."""
    return macro_f1_detail(predictions, truths, classes).macro_f1
