"""Training loop, grid-search tuning, and per-family orchestration.

The recipe: Adam, categorical cross-entropy over the five classes, no
augmentation by default. Runs are reproducible: data order, dropout masks,
and initialization all derive from the config seed, so resuming from a
checkpoint continues the exact same trajectory.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import metrics
from .data.manifest import DatasetManifest, SplitSpec, kfold
from .data.serialization import read_mask_png, read_slice_png
from .domain import NUM_CLASSES
from .errors import DivergedLoss, EmptyManifest
from .models import (
    ALL_FAMILIES,
    ArchitectureSpec,
    Family,
    ModelHandle,
    build,
    load_weights,
    save_weights,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 145
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    loss: str = "cce"
    augment: bool = False
    seed: int = 0
    checkpoint_every: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss != "cce":
            raise ValueError("only categorical cross-entropy is supported")

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_mean_dsc: float
    val_mean_iou: float
    wall_time: float

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    checkpoint_path: Path | None = None

    def write_jsonl(self, path: Path | str) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec.to_json()) + "\n")
        return path

    @property
    def best_record(self) -> EpochRecord:
        return min(self.records, key=lambda r: r.val_loss)


def load_arrays(manifest: DatasetManifest) -> tuple[torch.Tensor, torch.Tensor]:
    """Materialize a manifest as (N, 1, H, W) inputs and (N, H, W) targets."""
    if len(manifest) == 0:
        raise EmptyManifest("manifest has no entries")
    xs, ys = [], []
    for entry in manifest.entries:
        slice_ = read_slice_png(manifest.resolve(entry.slice_path))
        mask = read_mask_png(manifest.resolve(entry.mask_path), combo=entry.combo)
        xs.append(slice_.pixels)
        ys.append(mask.labels.astype(np.int64))
    x = torch.from_numpy(np.stack(xs)).unsqueeze(1)
    y = torch.from_numpy(np.stack(ys))
    return x, y


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0] >> 1)


def _augment_batch(
    x: torch.Tensor, y: torch.Tensor, rng: np.random.Generator
) -> tuple[torch.Tensor, torch.Tensor]:
    """Horizontal flips with p=0.5 per item; masks flip with their slices."""
    flips = rng.random(x.shape[0]) < 0.5
    if flips.any():
        idx = torch.from_numpy(np.flatnonzero(flips))
        x = x.clone()
        y = y.clone()
        x[idx] = torch.flip(x[idx], dims=[-1])
        y[idx] = torch.flip(y[idx], dims=[-1])
    return x, y


@torch.no_grad()
def _validate(module, x: torch.Tensor, y: torch.Tensor, batch_size: int):
    module.eval()
    losses, dscs, ious = [], [], []
    for i in range(0, x.shape[0], batch_size):
        xb, yb = x[i : i + batch_size], y[i : i + batch_size]
        logits = module(xb)
        losses.append(float(F.cross_entropy(logits, yb)))
        pred = logits.argmax(dim=1).numpy()
        for j in range(xb.shape[0]):
            truth = yb[j].numpy()
            counts = metrics.confusion_counts(pred[j], truth)
            present = [c for c in counts if int(c) != 0 and (truth == int(c)).any()]
            if present:
                ious.append(float(np.mean([metrics.iou(counts[c]) for c in present])))
                dscs.append(float(np.mean([metrics.dsc(counts[c]) for c in present])))
    return (
        float(np.mean(losses)),
        float(np.mean(dscs)) if dscs else 0.0,
        float(np.mean(ious)) if ious else 0.0,
    )


def _save_checkpoint(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def train(
    spec: ArchitectureSpec,
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    config: TrainConfig,
    out_dir: Path | str | None = None,
    resume_from: Path | str | None = None,
    epoch_callback=None,
) -> tuple[ModelHandle, TrainLog]:
    """Train one model and return the best-validation-loss checkpoint.

    ``epoch_callback(record, handle)`` may return True to stop early. A
    non-finite loss aborts with DivergedLoss carrying the last finite
    epoch's checkpoint.
    """
    x_tr, y_tr = load_arrays(train_manifest)
    x_va, y_va = load_arrays(val_manifest)

    handle = build(spec, seed=config.seed)
    module = handle.module
    optimizer = torch.optim.Adam(
        module.parameters(),
        lr=config.learning_rate,
        betas=(config.beta1, config.beta2),
        eps=config.eps,
    )

    out_dir = Path(out_dir) if out_dir is not None else None
    run_dir = out_dir / spec.family.value / f"seed{config.seed}" if out_dir else None

    log = TrainLog()
    start_epoch = 0
    best_val = float("inf")
    best_state = {k: v.clone() for k, v in module.state_dict().items()}

    if resume_from is not None:
        ckpt = torch.load(Path(resume_from), weights_only=False)
        module.load_state_dict(ckpt["model_state"])
        optimizer.load_state_dict(ckpt["optimizer_state"])
        start_epoch = ckpt["epoch"]
        best_val = ckpt["best_val_loss"]
        best_state = ckpt["best_state"]
        log.records = [EpochRecord(**r) for r in ckpt["records"]]

    n = x_tr.shape[0]
    diverged_at = None
    last_finite_state = {k: v.clone() for k, v in module.state_dict().items()}
    for epoch in range(start_epoch, config.epochs):
        t0 = time.time()
        module.train()
        order_rng = np.random.default_rng(_derived_seed(config.seed, epoch, 0xD47A))
        order = order_rng.permutation(n) if config.shuffle else np.arange(n)
        step_losses = []
        for step, lo in enumerate(range(0, n, config.batch_size)):
            idx = torch.from_numpy(order[lo : lo + config.batch_size].copy())
            xb, yb = x_tr[idx], y_tr[idx]
            if config.augment:
                aug_rng = np.random.default_rng(_derived_seed(config.seed, epoch, step, 0xA06))
                xb, yb = _augment_batch(xb, yb, aug_rng)
            gen = torch.Generator().manual_seed(_derived_seed(config.seed, epoch, step, 0xD809))
            optimizer.zero_grad()
            logits = module(xb, generator=gen)
            loss = F.cross_entropy(logits, yb)
            if not torch.isfinite(loss):
                diverged_at = (epoch, step)
                break
            loss.backward()
            optimizer.step()
            step_losses.append(float(loss.detach()))
        if diverged_at is not None:
            break

        val_loss, val_dsc, val_iou = _validate(module, x_va, y_va, config.batch_size)
        record = EpochRecord(
            epoch=epoch + 1,
            train_loss=float(np.mean(step_losses)),
            val_loss=val_loss,
            val_mean_dsc=val_dsc,
            val_mean_iou=val_iou,
            wall_time=time.time() - t0,
        )
        log.records.append(record)

        if val_loss < best_val:
            best_val = val_loss
            best_state = {k: v.clone() for k, v in module.state_dict().items()}
        last_finite_state = {k: v.clone() for k, v in module.state_dict().items()}

        if run_dir and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            log.checkpoint_path = _save_checkpoint(
                run_dir / f"epoch_{epoch + 1}.ckpt",
                {
                    "epoch": epoch + 1,
                    "model_state": module.state_dict(),
                    "optimizer_state": optimizer.state_dict(),
                    "best_val_loss": best_val,
                    "best_state": best_state,
                    "records": [r.to_json() for r in log.records],
                },
            )
        if epoch_callback is not None and epoch_callback(record, handle):
            break

    if diverged_at is not None:
        rescue_dir = run_dir if run_dir else Path(".")
        rescue = _save_checkpoint(
            rescue_dir / "diverged_last_finite.ckpt",
            {
                "epoch": diverged_at[0],
                "model_state": last_finite_state,
                "optimizer_state": optimizer.state_dict(),
                "best_val_loss": best_val,
                "best_state": best_state,
                "records": [r.to_json() for r in log.records],
            },
        )
        raise DivergedLoss(
            f"non-finite loss at epoch {diverged_at[0] + 1} step {diverged_at[1]}",
            checkpoint_path=rescue,
        )

    module.load_state_dict(best_state)
    module.eval()
    if run_dir:
        log.checkpoint_path = save_weights(handle, run_dir / "weights.pzw")
        log.write_jsonl(run_dir / "train_log.jsonl")
    return handle, log


@dataclass
class TuneCell:
    params: dict
    fold_val_dsc: list[float]
    fold_val_loss: list[float]

    @property
    def mean_val_dsc(self) -> float:
        return float(np.mean(self.fold_val_dsc))

    @property
    def mean_val_loss(self) -> float:
        return float(np.mean(self.fold_val_loss))

    def to_json(self) -> dict:
        return {
            "params": self.params,
            "fold_val_dsc": self.fold_val_dsc,
            "fold_val_loss": self.fold_val_loss,
            "mean_val_dsc": self.mean_val_dsc,
            "mean_val_loss": self.mean_val_loss,
        }


@dataclass
class TuneResult:
    best_params: dict
    cells: list[TuneCell]

    def to_json(self) -> dict:
        return {"best_params": self.best_params, "cells": [c.to_json() for c in self.cells]}


def tune(
    spec: ArchitectureSpec,
    train_manifest: DatasetManifest,
    grid: dict[str, list],
    base_config: TrainConfig,
    folds: int = 5,
) -> TuneResult:
    """Exhaustive grid search scored by fold-mean validation DSC.

    Ranking is deterministic: higher mean DSC first, ties broken by lower
    mean validation loss, then by grid order.
    """
    if not grid:
        raise ValueError("grid must not be empty")
    for key in grid:
        if not hasattr(base_config, key):
            raise ValueError(f"unknown hyperparameter {key!r}")

    pairs = kfold(train_manifest, SplitSpec(fold_count=folds, seed=base_config.seed))
    keys = list(grid)
    cells: list[TuneCell] = []
    for values in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, values))
        config = replace(base_config, **params)
        fold_dsc, fold_loss = [], []
        for fold_train, fold_val in pairs:
            _, log = train(spec, fold_train, fold_val, config)
            best = log.best_record
            fold_dsc.append(best.val_mean_dsc)
            fold_loss.append(best.val_loss)
        cells.append(TuneCell(params=params, fold_val_dsc=fold_dsc, fold_val_loss=fold_loss))

    ranked = sorted(
        range(len(cells)),
        key=lambda i: (-cells[i].mean_val_dsc, cells[i].mean_val_loss, i),
    )
    return TuneResult(best_params=cells[ranked[0]].params, cells=cells)


@dataclass
class FamilyResult:
    family: Family
    weights_path: Path | None = None
    log: TrainLog | None = None
    error: str | None = None
    skipped: bool = False


def train_all(
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    config: TrainConfig,
    out_dir: Path | str,
    families: tuple[Family, ...] = ALL_FAMILIES,
    spec_overrides: dict | None = None,
) -> dict[Family, FamilyResult]:
    """Train every family, one artifact each; failures stay isolated.

    Families whose weight archive already exists are skipped, making the
    orchestration resumable.
    """
    out_dir = Path(out_dir)
    results: dict[Family, FamilyResult] = {}
    for family in families:
        weights_path = out_dir / family.value / "weights.pzw"
        if weights_path.exists():
            results[family] = FamilyResult(family, weights_path=weights_path, skipped=True)
            continue
        spec = ArchitectureSpec(family=family, **(spec_overrides or {}))
        try:
            handle, log = train(spec, train_manifest, val_manifest, config)
            weights_path.parent.mkdir(parents=True, exist_ok=True)
            save_weights(handle, weights_path)
            log.write_jsonl(out_dir / family.value / "train_log.jsonl")
            results[family] = FamilyResult(family, weights_path=weights_path, log=log)
        except Exception as exc:  # noqa: BLE001 - per-family isolation is the contract
            results[family] = FamilyResult(family, error=f"{type(exc).__name__}: {exc}")
    return results
