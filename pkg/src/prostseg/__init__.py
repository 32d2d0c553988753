"""Prostate-zone MRI segmentation with Monte-Carlo dropout uncertainty.

Seven U-Net-family networks share one forward contract (256x256 grayscale
in, five-class per-pixel distributions out); repeated stochastic passes
through dropout give a predictive distribution whose normalized entropy is
the per-pixel uncertainty surfaced to reviewers via CLI, HTTP service, and
browser UI.
"""

from .domain import (
    CANONICAL_SIZE,
    NUM_CLASSES,
    ClassLabel,
    MriSlice,
    ProbabilityMap,
    ProbabilityStack,
    UncertaintyMap,
    ZoneCombo,
    ZoneMask,
    validate_pair,
)
from .models import ALL_FAMILIES, ArchitectureSpec, Family, ModelHandle

__version__ = "0.1.0"

__all__ = [
    "CANONICAL_SIZE",
    "NUM_CLASSES",
    "ClassLabel",
    "ZoneCombo",
    "MriSlice",
    "ZoneMask",
    "ProbabilityMap",
    "ProbabilityStack",
    "UncertaintyMap",
    "validate_pair",
    "Family",
    "ALL_FAMILIES",
    "ArchitectureSpec",
    "ModelHandle",
    "__version__",
]
