"""Confusion matrix, per-class precision/recall/F1, and report formatting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

CLASS_NAMES = {0: "normal", 1: "anomaly"}


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[actual][predicted] for classes {0: normal, 1: anomaly}."""

    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    matrix: ConfusionMatrix
    normal: ClassMetrics
    anomaly: ClassMetrics
    accuracy: float
    flags: tuple[str, ...] = ()


def confusion(y_true, y_pred) -> ConfusionMatrix:
    """Count the four outcome cells from two equal-length {0,1} vectors."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValidationError(
            f"label vectors must be equal-length 1-D, got {y_true.shape} and {y_pred.shape}")
    if not (np.isin(y_true, (0, 1)).all() and np.isin(y_pred, (0, 1)).all()):
        raise ValidationError("labels must be 0 or 1")
    tn = int(((y_true == 0) & (y_pred == 0)).sum())
    fp = int(((y_true == 0) & (y_pred == 1)).sum())
    fn = int(((y_true == 1) & (y_pred == 0)).sum())
    tp = int(((y_true == 1) & (y_pred == 1)).sum())
    return ConfusionMatrix(tn=tn, fp=fp, fn=fn, tp=tp)


def _safe_div(num: int, den: int, what: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(f"{what} undefined (zero denominator), reported as 0")
        return 0.0
    return num / den


def report(cm: ConfusionMatrix) -> EvalReport:
    """Per-class precision/recall/F1 plus accuracy; zero denominators give 0 and a flag."""
    if cm.total == 0:
        raise ValidationError("cannot report on an empty confusion matrix")
    flags: list[str] = []
    per_class = {}
    # the positive-class cells of "normal" are the mirrored anomaly cells
    cells = {
        0: (cm.tn, cm.fn, cm.fp),  # tp, fp, fn from the normal point of view
        1: (cm.tp, cm.fp, cm.fn),
    }
    support = {0: cm.tn + cm.fp, 1: cm.fn + cm.tp}
    for label, (tp_c, fp_c, fn_c) in cells.items():
        name = CLASS_NAMES[label]
        precision = _safe_div(tp_c, tp_c + fp_c, f"{name} precision", flags)
        recall = _safe_div(tp_c, tp_c + fn_c, f"{name} recall", flags)
        if precision + recall == 0.0:
            flags.append(f"{name} F1 undefined (zero denominator), reported as 0")
            f1 = 0.0
        else:
            f1 = 2.0 * precision * recall / (precision + recall)
        per_class[label] = ClassMetrics(precision, recall, f1, support[label])
    accuracy = (cm.tn + cm.tp) / cm.total
    return EvalReport(matrix=cm, normal=per_class[0], anomaly=per_class[1],
                      accuracy=accuracy, flags=tuple(flags))


def _pct(value: float) -> int:
    """Integer percent, rounded half-up."""
    return int(math.floor(value * 100.0 + 0.5))


def format_report(r: EvalReport, kind: str = "text") -> str:
    """Render a report as a fixed-width table or as full-precision JSON."""
    if kind == "json":
        payload = {
            "accuracy": r.accuracy,
            "classes": {
                CLASS_NAMES[label]: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for label, m in ((0, r.normal), (1, r.anomaly))
            },
            "confusion": {"tn": r.matrix.tn, "fp": r.matrix.fp,
                          "fn": r.matrix.fn, "tp": r.matrix.tp},
            "flags": list(r.flags),
        }
        return json.dumps(payload, indent=2)
    if kind != "text":
        raise ValidationError(f"unknown report kind {kind!r}")
    lines = [
        f"{'Label':<10}{'Precision':>10}{'Recall':>10}{'F1-score':>10}{'Support':>10}",
        f"{'Normal':<10}{f'{_pct(r.normal.precision)}%':>10}{f'{_pct(r.normal.recall)}%':>10}"
        f"{f'{_pct(r.normal.f1)}%':>10}{r.normal.support:>10}",
        f"{'Anomaly':<10}{f'{_pct(r.anomaly.precision)}%':>10}{f'{_pct(r.anomaly.recall)}%':>10}"
        f"{f'{_pct(r.anomaly.f1)}%':>10}{r.anomaly.support:>10}",
        f"{'Accuracy':<10}{f'{_pct(r.accuracy)}%':>10}{'':>10}{'':>10}{r.matrix.total:>10}",
    ]
    for flag in r.flags:
        lines.append(f"  note: {flag}")
    return "\n".join(lines)
