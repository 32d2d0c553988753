"""Dataset manifests, file formats, splits, and the phantom generator."""

from .manifest import (
    PAPER_SHAPE_COUNTS,
    DatasetManifest,
    ManifestEntry,
    SplitSpec,
    check_paper_shape,
    kfold,
    load_manifest,
    save_manifest,
    split,
)
from .phantom import DEFAULT_RADII, PhantomParams, generate_phantom, generate_phantom_set
from .serialization import (
    ZONE_PALETTE,
    from_payload,
    quantize_intensities,
    read_mask_png,
    read_slice_png,
    read_uncertainty_png,
    to_payload,
    write_label_png,
    write_mask_png,
    write_slice_png,
    write_uncertainty_png,
)

__all__ = [
    "DatasetManifest",
    "ManifestEntry",
    "SplitSpec",
    "PhantomParams",
    "PAPER_SHAPE_COUNTS",
    "DEFAULT_RADII",
    "ZONE_PALETTE",
    "check_paper_shape",
    "load_manifest",
    "save_manifest",
    "split",
    "kfold",
    "generate_phantom",
    "generate_phantom_set",
    "read_slice_png",
    "write_slice_png",
    "read_mask_png",
    "write_mask_png",
    "write_label_png",
    "read_uncertainty_png",
    "write_uncertainty_png",
    "quantize_intensities",
    "to_payload",
    "from_payload",
]
