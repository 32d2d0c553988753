"""Repeated stochastic evaluation and comparison artifacts.

Each test image is sampled T times; per-repeat overlap metrics aggregate
across repeats (mean and sd over the T evaluations) while uncertainty
aggregates across images. The whole pipeline pins single-threaded tensor
ops while running, so results are bitwise identical regardless of how many
worker jobs evaluate images concurrently.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import metrics, uncertainty
from .data.manifest import DatasetManifest, ManifestEntry
from .data.serialization import (
    read_mask_png,
    read_slice_png,
    write_label_png,
    write_uncertainty_png,
)
from .domain import ClassLabel
from .errors import EmptyManifest, ManifestMismatch
from .metrics import MetricReport
from .models import ModelHandle, set_stochastic
from .uncertainty import UncertaintySummary

#: Seed spacing between images; far larger than the maximum supported T.
IMAGE_SEED_STRIDE = 100_000


@contextmanager
def single_threaded_torch():
    """Pin tensor ops to one thread so results do not depend on --jobs."""
    previous = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(previous)


@dataclass
class ImageEval:
    entry: ManifestEntry
    reports: list[MetricReport]
    summary: UncertaintySummary
    mean_labels: np.ndarray
    umap_values: np.ndarray


@dataclass
class EvalRun:
    family: str
    T: int
    base_seed: int
    manifest_digest: str
    grouping: str
    images: list[ImageEval] = field(default_factory=list)

    @property
    def aggregate(self) -> dict[str, float]:
        per_repeat_iou = np.array(
            [[img.reports[t].mean_iou for img in self.images] for t in range(self.T)]
        ).mean(axis=1)
        per_repeat_dsc = np.array(
            [[img.reports[t].mean_dsc for img in self.images] for t in range(self.T)]
        ).mean(axis=1)
        per_repeat_loss = np.array(
            [[img.reports[t].loss for img in self.images] for t in range(self.T)]
        ).mean(axis=1)
        per_image_u = np.array([img.summary.mean_overall for img in self.images])

        def sd(values: np.ndarray) -> float:
            return float(values.std(ddof=1)) if values.size > 1 else 0.0

        return {
            "mean_iou": float(per_repeat_iou.mean()),
            "sd_iou": sd(per_repeat_iou),
            "mean_dsc": float(per_repeat_dsc.mean()),
            "sd_dsc": sd(per_repeat_dsc),
            "mean_loss": float(per_repeat_loss.mean()),
            "sd_loss": sd(per_repeat_loss),
            "mean_uncertainty": float(per_image_u.mean()),
            "sd_uncertainty": sd(per_image_u),
        }

    def class_uncertainty_values(self) -> dict[str, list[float]]:
        """Per-class mean uncertainties across images, plus the overall row."""
        out: dict[str, list[float]] = {label.name: [] for label in ClassLabel}
        out["OVERALL"] = []
        for img in self.images:
            out["OVERALL"].append(img.summary.mean_overall)
            for label, value in img.summary.per_class_mean.items():
                out[label.name].append(value)
        return {k: v for k, v in out.items() if v}


def _evaluate_one(
    handle: ModelHandle,
    manifest: DatasetManifest,
    entry: ManifestEntry,
    T: int,
    seed: int,
    grouping: str,
) -> ImageEval:
    slice_ = read_slice_png(manifest.resolve(entry.slice_path))
    truth = read_mask_png(manifest.resolve(entry.mask_path), combo=entry.combo)

    stack = uncertainty.mc_sample(handle, slice_, T=T, base_seed=seed)
    reports = [metrics.evaluate(sample, truth) for sample in stack.samples]
    mean_probs = uncertainty.predictive_mean(stack)
    umap = uncertainty.entropy_map(mean_probs)
    mean_labels = mean_probs.argmax_labels()
    summary = uncertainty.summarize(umap, mean_labels, truth=truth, grouping=grouping)
    return ImageEval(
        entry=entry,
        reports=reports,
        summary=summary,
        mean_labels=mean_labels,
        umap_values=np.asarray(umap.values),
    )


def evaluate_model(
    handle: ModelHandle,
    manifest: DatasetManifest,
    T: int = 50,
    base_seed: int = 0,
    jobs: int = 1,
    grouping: str = "by_truth",
) -> EvalRun:
    """Evaluate one model over a manifest with T stochastic repeats per image."""
    if len(manifest) == 0:
        raise EmptyManifest("evaluation manifest has no entries")
    handle = set_stochastic(handle, True)
    run = EvalRun(
        family=handle.spec.family.value,
        T=T,
        base_seed=base_seed,
        manifest_digest=manifest.digest(),
        grouping=grouping,
    )

    def task(i: int) -> ImageEval:
        return _evaluate_one(
            handle, manifest, manifest.entries[i], T, base_seed + i * IMAGE_SEED_STRIDE, grouping
        )

    with single_threaded_torch():
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                run.images = list(pool.map(task, range(len(manifest))))
        else:
            run.images = [task(i) for i in range(len(manifest))]
    return run


def boxplot_stats(values) -> dict[str, float]:
    """Median, quartiles, and 1.5 IQR whiskers clamped to observed data."""
    arr = np.asarray(sorted(values), dtype=np.float64)
    q1, median, q3 = np.percentile(arr, [25, 50, 75])
    iqr = q3 - q1
    lo_limit, hi_limit = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = arr[(arr >= lo_limit) & (arr <= hi_limit)]
    return {
        "count": int(arr.size),
        "mean": float(arr.mean()),
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
    }


@dataclass
class ComparisonRow:
    family: str
    aggregate: dict[str, float]
    best_iou: bool = False
    best_dsc: bool = False
    best_loss: bool = False


@dataclass
class Comparison:
    rows: list[ComparisonRow]
    boxplots: dict[str, dict[str, dict[str, float]]]  # family -> class -> stats
    T: int
    manifest_digest: str
    runs: list[EvalRun] = field(default_factory=list)


def compare(runs: list[EvalRun]) -> Comparison:
    """Rank runs and flag the best score per column.

    All runs must share the test manifest and T. Row order is defined by
    descending mean DSC (ties by family name), so the result is invariant
    to the order runs are passed in.
    """
    if not runs:
        raise ValueError("compare needs at least one run")
    digest, T = runs[0].manifest_digest, runs[0].T
    for run in runs[1:]:
        if run.manifest_digest != digest or run.T != T:
            raise ManifestMismatch("all runs must share the same test manifest and T")

    rows = [ComparisonRow(family=r.family, aggregate=r.aggregate) for r in runs]
    rows.sort(key=lambda row: (-row.aggregate["mean_dsc"], row.family))
    best_iou = max(r.aggregate["mean_iou"] for r in rows)
    best_dsc = max(r.aggregate["mean_dsc"] for r in rows)
    best_loss = min(r.aggregate["mean_loss"] for r in rows)
    for row in rows:
        row.best_iou = row.aggregate["mean_iou"] == best_iou
        row.best_dsc = row.aggregate["mean_dsc"] == best_dsc
        row.best_loss = row.aggregate["mean_loss"] == best_loss

    boxplots = {
        run.family: {
            cls: boxplot_stats(vals) for cls, vals in run.class_uncertainty_values().items()
        }
        for run in runs
    }
    order = [row.family for row in rows]
    boxplots = {fam: boxplots[fam] for fam in order}
    return Comparison(rows=rows, boxplots=boxplots, T=T, manifest_digest=digest, runs=list(runs))


_TABLE_FIELDS = [
    "family",
    "T",
    "mean_iou",
    "sd_iou",
    "mean_dsc",
    "sd_dsc",
    "mean_loss",
    "sd_loss",
    "mean_uncertainty",
    "sd_uncertainty",
    "best_iou",
    "best_dsc",
    "best_loss",
]


def _write_table_csv(comparison: Comparison, path: Path) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_TABLE_FIELDS)
        writer.writeheader()
        for row in comparison.rows:
            record = {"family": row.family, "T": comparison.T}
            record.update({k: repr(v) for k, v in row.aggregate.items()})
            record["best_iou"] = int(row.best_iou)
            record["best_dsc"] = int(row.best_dsc)
            record["best_loss"] = int(row.best_loss)
            writer.writerow(record)
    return path


def read_table_csv(path: Path | str) -> list[dict]:
    with Path(path).open() as fh:
        return [dict(row) for row in csv.DictReader(fh)]


_BOX_FIELDS = ["family", "class", "count", "mean", "median", "q1", "q3",
               "whisker_low", "whisker_high"]


def _write_boxplot_csv(comparison: Comparison, path: Path) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_BOX_FIELDS)
        writer.writeheader()
        for family, classes in comparison.boxplots.items():
            for cls, stats in classes.items():
                record = {"family": family, "class": cls, "count": stats["count"]}
                record.update(
                    {k: repr(stats[k]) for k in _BOX_FIELDS[3:]}
                )
                writer.writerow(record)
    return path


def _export_run_images(run: EvalRun, out_dir: Path) -> list[Path]:
    written = []
    for img in run.images:
        stem = Path(img.entry.slice_path).stem.replace("_img", "")
        seg_path = out_dir / f"{stem}_mean_seg.png"
        write_label_png(img.mean_labels, seg_path)
        unc_path = out_dir / f"{stem}_uncertainty.png"
        write_uncertainty_png(
            uncertainty.UncertaintyMap(values=img.umap_values), unc_path
        )
        written += [seg_path, unc_path]
    return written


def export_figures(result: EvalRun | Comparison, out_dir: Path | str) -> list[Path]:
    """Write PNGs plus the table and boxplot CSVs; filenames are deterministic."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(result, EvalRun):
        comparison = compare([result])
        written = _export_run_images(result, out_dir)
    else:
        comparison = result
        written = []
        for run in comparison.runs:
            family_dir = out_dir / run.family
            family_dir.mkdir(exist_ok=True)
            written += _export_run_images(run, family_dir)
    written.append(_write_table_csv(comparison, out_dir / "metrics_table.csv"))
    written.append(_write_boxplot_csv(comparison, out_dir / "uncertainty_boxplots.csv"))
    return written
