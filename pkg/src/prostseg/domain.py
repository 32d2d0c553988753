"""Shared value types for multi-zone prostate MRI segmentation.

Every type here is immutable after construction and safe to share across
threads. Pixel grids are numpy arrays with the writeable flag cleared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable

import numpy as np

from .errors import ComboMismatch, EmptyStack, IllegalLabel, ShapeMismatch

#: Canonical square resolution every slice is resampled to on ingestion.
CANONICAL_SIZE = 256

#: Number of softmax classes (background plus four zones).
NUM_CLASSES = 5

#: Slice intensities live on a 1/65535 grid so 16-bit storage is lossless.
INTENSITY_STEPS = 65535


class ClassLabel(IntEnum):
    """Per-pixel segmentation classes in the fixed probability-axis order.

    BG is an explicit class: unlabeled tissue gets its own softmax slot
    rather than being masked out of the loss.
    """

    BG = 0
    CZ = 1
    PZ = 2
    TZ = 3
    TUM = 4


#: Fixed class order used on every probability axis.
CLASS_ORDER: tuple[ClassLabel, ...] = tuple(ClassLabel)

ZONE_LABELS: tuple[ClassLabel, ...] = (
    ClassLabel.CZ,
    ClassLabel.PZ,
    ClassLabel.TZ,
    ClassLabel.TUM,
)


class ZoneCombo(Enum):
    """The four zone combinations that occur in the dataset.

    Every combination contains CZ and PZ; TZ and TUM are optional.
    """

    CZ_PZ = "CZ_PZ"
    CZ_PZ_TZ = "CZ_PZ_TZ"
    CZ_PZ_TUM = "CZ_PZ_TUM"
    CZ_PZ_TZ_TUM = "CZ_PZ_TZ_TUM"

    @property
    def zone_labels(self) -> frozenset[ClassLabel]:
        """Non-background labels implied by this combination."""
        return _COMBO_LABELS[self]

    @classmethod
    def from_labels(cls, labels: Iterable[int]) -> "ZoneCombo":
        """Infer the combination from the non-BG labels present in a mask.

        Raises ComboMismatch when the label set matches no combination.
        """
        present = frozenset(ClassLabel(int(v)) for v in labels if int(v) != ClassLabel.BG)
        for combo, expected in _COMBO_LABELS.items():
            if present == expected:
                return combo
        raise ComboMismatch(f"label set {sorted(l.name for l in present)} matches no zone combination")


_COMBO_LABELS: dict[ZoneCombo, frozenset[ClassLabel]] = {
    ZoneCombo.CZ_PZ: frozenset({ClassLabel.CZ, ClassLabel.PZ}),
    ZoneCombo.CZ_PZ_TZ: frozenset({ClassLabel.CZ, ClassLabel.PZ, ClassLabel.TZ}),
    ZoneCombo.CZ_PZ_TUM: frozenset({ClassLabel.CZ, ClassLabel.PZ, ClassLabel.TUM}),
    ZoneCombo.CZ_PZ_TZ_TUM: frozenset(
        {ClassLabel.CZ, ClassLabel.PZ, ClassLabel.TZ, ClassLabel.TUM}
    ),
}


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class MriSlice:
    """A single-channel 2-D intensity image at the canonical resolution.

    Intensities are floats in [0, 1] on the 1/65535 grid.
    """

    pixels: np.ndarray
    patient_id: str = ""
    slice_id: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 2 or px.shape[0] != CANONICAL_SIZE or px.shape[1] != CANONICAL_SIZE:
            raise ShapeMismatch(
                f"slice must be {CANONICAL_SIZE}x{CANONICAL_SIZE}, got {px.shape}"
            )
        if not np.isfinite(px).all():
            raise ValueError("slice contains non-finite intensities")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("slice intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class ZoneMask:
    """Per-pixel integer labels with the zone combination they encode.

    Construction checks only structure (2-D integer grid); the strict label
    and combo invariants are enforced by ``check`` and ``validate_pair`` so
    that violations surface as typed errors rather than construction bugs.
    """

    labels: np.ndarray
    combo: ZoneCombo

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.size == 0:
            raise ShapeMismatch(f"mask must be a non-empty 2-D grid, got shape {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise IllegalLabel(f"mask dtype must be integer, got {lab.dtype}")
        if lab.min() >= 0 and lab.max() <= 255:
            lab = lab.astype(np.uint8, copy=False)
        object.__setattr__(self, "labels", _freeze(lab))
        if not isinstance(self.combo, ZoneCombo):
            object.__setattr__(self, "combo", ZoneCombo(self.combo))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def present_labels(self) -> frozenset[ClassLabel]:
        """Non-BG labels actually present in the grid."""
        vals = np.unique(self.labels)
        bad = [int(v) for v in vals if int(v) not in set(int(c) for c in CLASS_ORDER)]
        if bad:
            raise IllegalLabel(f"mask contains labels outside 0..{NUM_CLASSES - 1}: {bad}")
        return frozenset(ClassLabel(int(v)) for v in vals if int(v) != ClassLabel.BG)

    def check(self) -> "ZoneMask":
        """Enforce the full invariants: legal labels, combo-consistent set."""
        present = self.present_labels()
        if present != self.combo.zone_labels:
            raise ComboMismatch(
                f"mask labels {sorted(l.name for l in present)} do not match "
                f"combo {self.combo.value}"
            )
        return self


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel class distributions, shape (H, W, K) with K = 5."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float32)
        if p.ndim != 3 or p.shape[-1] != NUM_CLASSES:
            raise ShapeMismatch(f"probability map must be (H, W, {NUM_CLASSES}), got {p.shape}")
        if p.min() < 0.0:
            raise ValueError("probabilities must be non-negative")
        sums = p.sum(axis=-1)
        if not np.allclose(sums, 1.0, atol=1e-5):
            worst = float(np.abs(sums - 1.0).max())
            raise ValueError(f"pixel distributions must sum to 1 within 1e-5 (max dev {worst:.2e})")
        object.__setattr__(self, "probs", _freeze(p))

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape[:2]

    def argmax_labels(self) -> np.ndarray:
        """Decode to label ids; ties break toward the lower class id."""
        return self.probs.argmax(axis=-1).astype(np.uint8)


@dataclass(frozen=True)
class ProbabilityStack:
    """T probability maps from T stochastic forward passes of one slice."""

    samples: tuple[ProbabilityMap, ...]
    seed_trace: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        samples = tuple(self.samples)
        if len(samples) < 1:
            raise EmptyStack("a probability stack needs at least one sample")
        shape = samples[0].probs.shape
        for s in samples[1:]:
            if s.probs.shape != shape:
                raise ShapeMismatch("all stack samples must share H, W, K")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "seed_trace", tuple(int(s) for s in self.seed_trace))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def T(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class UncertaintyMap:
    """Per-pixel normalized predictive entropy in [0, 1].

    Stored in float64: entropy analytics are checked to 1e-9, which float32
    storage could not carry.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeMismatch(f"uncertainty map must be 2-D, got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("uncertainty map contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("uncertainty values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def validate_pair(slice_: MriSlice, mask: ZoneMask) -> tuple[MriSlice, ZoneMask]:
    """Check that a slice and mask form a consistent training pair.

    Raises ShapeMismatch, IllegalLabel, or ComboMismatch; returns the pair
    unchanged when every invariant holds.
    """
    if slice_.pixels.shape != mask.labels.shape:
        raise ShapeMismatch(
            f"slice shape {slice_.pixels.shape} != mask shape {mask.labels.shape}"
        )
    mask.check()
    return slice_, mask
