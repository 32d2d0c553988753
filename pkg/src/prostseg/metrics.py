"""Segmentation quality metrics and the cross-entropy training loss.

All metrics reduce exact integer confusion counts, so they can be checked
bit-for-bit against a per-pixel counting oracle. Class means follow one
documented convention: a class enters the mean only if it is present in
the ground truth, and BG is excluded unless explicitly requested (zone
masks are background-dominated, which would inflate the means).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import NUM_CLASSES, ClassLabel, ProbabilityMap, ZoneMask
from .errors import ShapeMismatch

#: Probabilities are clamped to this floor before taking logs.
LOSS_EPSILON = 1e-7


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    fp: int
    fn: int

    @property
    def support(self) -> int:
        return self.tp + self.fp + self.fn


@dataclass(frozen=True)
class MetricReport:
    """Per-class and mean overlap metrics plus the cross-entropy loss."""

    per_class: dict[ClassLabel, dict[str, float]]
    mean_iou: float
    mean_dsc: float
    loss: float
    classes_evaluated: tuple[ClassLabel, ...]

    def to_json(self) -> dict:
        return {
            "per_class": {
                label.name: {"iou": vals["iou"], "dsc": vals["dsc"]}
                for label, vals in self.per_class.items()
            },
            "mean_iou": self.mean_iou,
            "mean_dsc": self.mean_dsc,
            "loss": self.loss,
            "classes_evaluated": [label.name for label in self.classes_evaluated],
        }


def _as_label_array(mask) -> np.ndarray:
    if isinstance(mask, ZoneMask):
        return mask.labels
    return np.asarray(mask)


def confusion_counts(pred, truth) -> dict[ClassLabel, ClassCounts]:
    """Exact per-class true-positive / false-positive / false-negative counts."""
    p = _as_label_array(pred)
    t = _as_label_array(truth)
    if p.shape != t.shape:
        raise ShapeMismatch(f"pred shape {p.shape} != truth shape {t.shape}")
    joint = np.bincount(
        (t.astype(np.int64).ravel() * NUM_CLASSES + p.astype(np.int64).ravel()),
        minlength=NUM_CLASSES * NUM_CLASSES,
    ).reshape(NUM_CLASSES, NUM_CLASSES)
    out: dict[ClassLabel, ClassCounts] = {}
    for label in ClassLabel:
        k = int(label)
        tp = int(joint[k, k])
        fn = int(joint[k, :].sum() - tp)
        fp = int(joint[:, k].sum() - tp)
        out[label] = ClassCounts(tp=tp, fp=fp, fn=fn)
    return out


def iou(counts: ClassCounts) -> float:
    """Intersection over union; NaN when the class is absent on both sides."""
    denom = counts.tp + counts.fp + counts.fn
    if denom == 0:
        return math.nan
    return counts.tp / denom


def dsc(counts: ClassCounts) -> float:
    """Dice similarity coefficient; NaN when the class is absent on both sides."""
    denom = 2 * counts.tp + counts.fp + counts.fn
    if denom == 0:
        return math.nan
    return 2 * counts.tp / denom


def cce_loss(probs: ProbabilityMap | np.ndarray, truth) -> float:
    """Mean over pixels of -log p(true class), probabilities clamped to [1e-7, 1]."""
    p = probs.probs if isinstance(probs, ProbabilityMap) else np.asarray(probs)
    t = _as_label_array(truth)
    if p.shape[:2] != t.shape:
        raise ShapeMismatch(f"probs shape {p.shape[:2]} != truth shape {t.shape}")
    picked = np.take_along_axis(
        p.astype(np.float64), t[..., None].astype(np.int64), axis=-1
    )[..., 0]
    picked = np.clip(picked, LOSS_EPSILON, 1.0)
    return float(np.mean(-np.log(picked)))


def evaluate(
    mean_probs: ProbabilityMap,
    truth: ZoneMask,
    include_background: bool = False,
) -> MetricReport:
    """Argmax-decode a probability map and score it against the truth.

    Classes absent from the truth are excluded from the means. If the truth
    is pure background, BG is evaluated regardless of the flag so the means
    stay defined.
    """
    t = _as_label_array(truth)
    if mean_probs.probs.shape[:2] != t.shape:
        raise ShapeMismatch(
            f"probs shape {mean_probs.probs.shape[:2]} != truth shape {t.shape}"
        )
    decoded = mean_probs.argmax_labels()
    counts = confusion_counts(decoded, t)

    present = {ClassLabel(int(v)) for v in np.unique(t)}
    evaluated = sorted(
        label
        for label in present
        if include_background or label != ClassLabel.BG
    )
    if not evaluated:
        evaluated = [ClassLabel.BG]

    per_class = {
        label: {"iou": iou(counts[label]), "dsc": dsc(counts[label])}
        for label in evaluated
    }
    mean_iou = float(np.mean([v["iou"] for v in per_class.values()]))
    mean_dsc = float(np.mean([v["dsc"] for v in per_class.values()]))
    return MetricReport(
        per_class=per_class,
        mean_iou=mean_iou,
        mean_dsc=mean_dsc,
        loss=cce_loss(mean_probs, t),
        classes_evaluated=tuple(evaluated),
    )


def report_to_csv(reports: dict[str, MetricReport], path: Path | str) -> Path:
    """Write one row per named report with per-class and mean columns."""
    path = Path(path)
    fields = ["name", "mean_iou", "mean_dsc", "loss"]
    for label in ClassLabel:
        fields += [f"{label.name}_iou", f"{label.name}_dsc"]
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for name, report in reports.items():
            row = {
                "name": name,
                "mean_iou": repr(report.mean_iou),
                "mean_dsc": repr(report.mean_dsc),
                "loss": repr(report.loss),
            }
            for label, vals in report.per_class.items():
                row[f"{label.name}_iou"] = repr(vals["iou"])
                row[f"{label.name}_dsc"] = repr(vals["dsc"])
            writer.writerow(row)
    return path


def report_to_json_file(report: MetricReport, path: Path | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_json(), indent=2) + "\n")
    return path
