"""Monte-Carlo sampling and predictive-entropy uncertainty maps.

T stochastic forward passes approximate the posterior predictive
distribution; its per-pixel entropy (natural log, normalized by ln K) is
the uncertainty score. Sampling seeds derive from a base seed, so the
whole pipeline is deterministic and independent of any parallelism in the
caller.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .domain import (
    NUM_CLASSES,
    ClassLabel,
    MriSlice,
    ProbabilityMap,
    ProbabilityStack,
    UncertaintyMap,
    ZoneMask,
)
from .errors import EmptyStack, MissingTruth, ModelNotStochastic, NoBoundary, ShapeMismatch
from .models import ModelHandle, forward

GROUPINGS = ("by_truth", "by_prediction")


@dataclass(frozen=True)
class UncertaintySummary:
    """Mean/sd of an uncertainty map, overall and per class."""

    mean_overall: float
    sd_overall: float
    per_class_mean: dict[ClassLabel, float]
    per_class_sd: dict[ClassLabel, float]
    grouping: str

    def to_json(self) -> dict:
        return {
            "mean_overall": self.mean_overall,
            "sd_overall": self.sd_overall,
            "per_class_mean": {l.name: v for l, v in self.per_class_mean.items()},
            "per_class_sd": {l.name: v for l, v in self.per_class_sd.items()},
            "grouping": self.grouping,
        }


def mc_sample(
    model: ModelHandle, slice_: MriSlice, T: int = 50, base_seed: int = 0
) -> ProbabilityStack:
    """Run T stochastic forwards with derived seeds base_seed + t.

    Warns (does not fail) when the model cannot actually vary its output,
    so deterministic baselines flow through the same pipeline.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if T > 1 and (not model.stochastic_mode or model.spec.dropout_rate == 0.0):
        warnings.warn(
            f"sampling T={T} from a non-stochastic model: all samples will be equal",
            category=ModelNotStochastic,
            stacklevel=2,
        )
    seeds = [int(base_seed) + t for t in range(T)]
    samples = []
    for seed in seeds:
        if model.stochastic_mode:
            samples.append(forward(model, slice_, rng_seed=seed)[0])
        else:
            samples.append(forward(model, slice_)[0])
    return ProbabilityStack(samples=tuple(samples), seed_trace=tuple(seeds))


def predictive_mean(stack: ProbabilityStack) -> ProbabilityMap:
    """Per-pixel arithmetic mean of the stacked distributions."""
    if len(stack) == 0:
        raise EmptyStack("cannot average an empty stack")
    acc = np.zeros(stack.samples[0].probs.shape, dtype=np.float64)
    for sample in stack.samples:
        acc += sample.probs
    return ProbabilityMap(probs=(acc / len(stack)).astype(np.float32))


def entropy_map(mean_probs: ProbabilityMap, normalize: bool = True):
    """Per-pixel entropy H = -sum_k p_k ln p_k with 0 ln 0 = 0.

    With ``normalize`` (the default) the map divides by ln K, values span
    [0, 1], and the result is an UncertaintyMap. Raw entropy can reach
    ln K, which the UncertaintyMap type rejects by design, so
    ``normalize=False`` returns the bare value grid instead. Either way
    values are clipped to their valid range to absorb float round-off.
    """
    values = entropy_values(mean_probs.probs, normalize=normalize)
    return UncertaintyMap(values=values) if normalize else values


def entropy_values(probs: np.ndarray, normalize: bool = True) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    h = -terms.sum(axis=-1)
    cap = math.log(p.shape[-1])
    if normalize:
        h = h / cap
        cap = 1.0
    return np.clip(h, 0.0, cap)


def _label_grid(mask) -> np.ndarray:
    return mask.labels if isinstance(mask, ZoneMask) else np.asarray(mask)


def summarize(
    umap: UncertaintyMap,
    pred,
    truth=None,
    grouping: str = "by_truth",
) -> UncertaintySummary:
    """Aggregate uncertainty per class, grouping pixels by truth or prediction.

    ``pred`` and ``truth`` may be ZoneMasks or bare label grids (a decoded
    prediction need not match any zone combination). Standard deviations
    are population sds over the grouped pixels; only classes present under
    the chosen grouping appear in the per-class maps.
    """
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    if grouping == "by_truth":
        if truth is None:
            raise MissingTruth("grouping by_truth requires a ground-truth mask")
        labels = _label_grid(truth)
    else:
        labels = _label_grid(pred)
    values = umap.values
    if labels.shape != values.shape:
        raise ShapeMismatch(f"mask shape {labels.shape} != map shape {values.shape}")

    per_mean: dict[ClassLabel, float] = {}
    per_sd: dict[ClassLabel, float] = {}
    for label in ClassLabel:
        sel = values[labels == int(label)]
        if sel.size == 0:
            continue
        per_mean[label] = float(sel.mean())
        per_sd[label] = float(sel.std())
    return UncertaintySummary(
        mean_overall=float(values.mean()),
        sd_overall=float(values.std()),
        per_class_mean=per_mean,
        per_class_sd=per_sd,
        grouping=grouping,
    )


@dataclass(frozen=True)
class BoundaryContrast:
    boundary_mean: float
    interior_mean: float


def _chebyshev_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Dilate a boolean grid by a (2r+1) square, one ring at a time."""
    out = mask.copy()
    for _ in range(radius):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        grown[1:, 1:] |= out[:-1, :-1]
        grown[1:, :-1] |= out[:-1, 1:]
        grown[:-1, 1:] |= out[1:, :-1]
        grown[:-1, :-1] |= out[1:, 1:]
        out = grown
    return out


def boundary_interior_contrast(
    umap: UncertaintyMap, truth: ZoneMask, band_px: int = 2
) -> BoundaryContrast:
    """Mean uncertainty near inter-class edges versus everywhere else.

    The boundary band is every pixel within Chebyshev distance ``band_px``
    of a pixel whose 4-neighborhood crosses a class edge.
    """
    if band_px < 1:
        raise ValueError("band_px must be >= 1")
    labels = truth.labels
    values = umap.values
    if labels.shape != values.shape:
        raise ShapeMismatch(f"mask shape {labels.shape} != map shape {values.shape}")

    edge = np.zeros(labels.shape, dtype=bool)
    edge[:-1, :] |= labels[:-1, :] != labels[1:, :]
    edge[1:, :] |= labels[1:, :] != labels[:-1, :]
    edge[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    edge[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    if not edge.any():
        raise NoBoundary("truth has a single class, no inter-class edges")

    band = _chebyshev_dilate(edge, band_px)
    interior = ~band
    boundary_mean = float(values[band].mean())
    interior_mean = float(values[interior].mean()) if interior.any() else math.nan
    return BoundaryContrast(boundary_mean=boundary_mean, interior_mean=interior_mean)
