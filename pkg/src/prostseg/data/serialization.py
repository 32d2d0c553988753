"""File formats and exact JSON payloads for the domain types.

Slices are stored as 16-bit grayscale PNG, masks as 8-bit indexed PNG with
a fixed zone palette. Both round-trip losslessly because slice intensities
live on the 1/65535 grid. The ``to_payload``/``from_payload`` pair is the
exact in-memory serialization used for wire transfer and round-trip tests.
"""

from __future__ import annotations

import base64
from pathlib import Path

import numpy as np
from PIL import Image

from ..domain import (
    CANONICAL_SIZE,
    INTENSITY_STEPS,
    ClassLabel,
    MriSlice,
    ProbabilityMap,
    ProbabilityStack,
    UncertaintyMap,
    ZoneCombo,
    ZoneMask,
)
from ..errors import MissingFile, ParseError

#: Fixed display palette: BG black, CZ blue, PZ green, TZ yellow, TUM red.
ZONE_PALETTE: dict[ClassLabel, tuple[int, int, int]] = {
    ClassLabel.BG: (0, 0, 0),
    ClassLabel.CZ: (40, 96, 219),
    ClassLabel.PZ: (58, 170, 94),
    ClassLabel.TZ: (233, 204, 40),
    ClassLabel.TUM: (219, 58, 44),
}


def _flat_palette() -> list[int]:
    flat: list[int] = []
    for label in ClassLabel:
        flat.extend(ZONE_PALETTE[label])
    flat.extend([0] * (256 * 3 - len(flat)))
    return flat


def quantize_intensities(pixels: np.ndarray) -> np.ndarray:
    """Snap float intensities in [0, 1] onto the lossless 16-bit grid."""
    codes = np.rint(np.asarray(pixels, dtype=np.float64) * INTENSITY_STEPS)
    return (codes / INTENSITY_STEPS).astype(np.float32)


def write_slice_png(slice_: MriSlice, path: Path | str) -> None:
    codes = np.rint(slice_.pixels.astype(np.float64) * INTENSITY_STEPS).astype(np.uint16)
    Image.fromarray(codes).save(path, format="PNG")


def read_slice_png(path: Path | str, patient_id: str = "", slice_id: str = "") -> MriSlice:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"slice file not found: {path}")
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        img = img.convert("L")
        arr = np.asarray(img)
    pixels = _normalize_intensity(arr)
    if pixels.shape != (CANONICAL_SIZE, CANONICAL_SIZE):
        pil = Image.fromarray(pixels.astype(np.float32), mode="F")
        pil = pil.resize((CANONICAL_SIZE, CANONICAL_SIZE), Image.BILINEAR)
        pixels = np.clip(np.asarray(pil), 0.0, 1.0)
        pixels = quantize_intensities(pixels)
    return MriSlice(pixels=pixels, patient_id=patient_id, slice_id=slice_id or path.stem)


def _normalize_intensity(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == np.uint8:
        return (arr.astype(np.float64) / 255.0).astype(np.float32)
    if arr.dtype in (np.uint16, np.int32):  # PIL reads 16-bit PNG as I or I;16
        return (arr.astype(np.float64) / INTENSITY_STEPS).astype(np.float32)
    if np.issubdtype(arr.dtype, np.floating):
        return np.clip(arr, 0.0, 1.0).astype(np.float32)
    raise ParseError(f"unsupported slice pixel dtype {arr.dtype}")


def write_label_png(labels: np.ndarray, path: Path | str) -> None:
    """Write a bare label grid as an indexed PNG with the zone palette."""
    img = Image.fromarray(np.asarray(labels, dtype=np.uint8))
    img.putpalette(_flat_palette())
    img.save(path, format="PNG")


def write_mask_png(mask: ZoneMask, path: Path | str) -> None:
    write_label_png(mask.labels, path)


def read_mask_png(path: Path | str, combo: ZoneCombo | None = None) -> ZoneMask:
    """Load an 8-bit indexed mask; the combo is inferred when not given."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"mask file not found: {path}")
    arr = np.asarray(Image.open(path)).astype(np.uint8)
    if arr.shape != (CANONICAL_SIZE, CANONICAL_SIZE) and combo is not None:
        pil = Image.fromarray(arr)
        pil = pil.resize((CANONICAL_SIZE, CANONICAL_SIZE), Image.NEAREST)
        arr = np.asarray(pil).astype(np.uint8)
    if combo is None:
        combo = ZoneCombo.from_labels(np.unique(arr))
    return ZoneMask(labels=arr, combo=combo)


def write_uncertainty_png(umap: UncertaintyMap, path: Path | str) -> None:
    """Export as 16-bit grayscale: stored code = round(65535 * u)."""
    codes = np.rint(umap.values.astype(np.float64) * INTENSITY_STEPS).astype(np.uint16)
    Image.fromarray(codes).save(path, format="PNG")


def read_uncertainty_png(path: Path | str) -> UncertaintyMap:
    arr = np.asarray(Image.open(path))
    return UncertaintyMap(values=(arr.astype(np.float64) / INTENSITY_STEPS).astype(np.float32))


# -- exact JSON payloads -----------------------------------------------------

def _encode_array(arr: np.ndarray) -> dict:
    return {
        "dtype": str(arr.dtype),
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(obj["data"])
        arr = np.frombuffer(raw, dtype=np.dtype(obj["dtype"]))
        return arr.reshape(obj["shape"]).copy()
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"malformed array payload: {exc}") from exc


def to_payload(obj) -> dict:
    """Exact, reversible JSON-compatible encoding of any domain value."""
    if isinstance(obj, MriSlice):
        return {
            "type": "mri_slice",
            "pixels": _encode_array(obj.pixels),
            "patient_id": obj.patient_id,
            "slice_id": obj.slice_id,
        }
    if isinstance(obj, ZoneMask):
        return {
            "type": "zone_mask",
            "labels": _encode_array(obj.labels),
            "combo": obj.combo.value,
        }
    if isinstance(obj, ProbabilityMap):
        return {"type": "probability_map", "probs": _encode_array(obj.probs)}
    if isinstance(obj, ProbabilityStack):
        return {
            "type": "probability_stack",
            "samples": [_encode_array(s.probs) for s in obj.samples],
            "seed_trace": list(obj.seed_trace),
        }
    if isinstance(obj, UncertaintyMap):
        return {"type": "uncertainty_map", "values": _encode_array(obj.values)}
    raise TypeError(f"no payload encoding for {type(obj).__name__}")


def from_payload(payload: dict):
    kind = payload.get("type")
    if kind == "mri_slice":
        return MriSlice(
            pixels=_decode_array(payload["pixels"]),
            patient_id=payload.get("patient_id", ""),
            slice_id=payload.get("slice_id", ""),
        )
    if kind == "zone_mask":
        return ZoneMask(
            labels=_decode_array(payload["labels"]),
            combo=ZoneCombo(payload["combo"]),
        )
    if kind == "probability_map":
        return ProbabilityMap(probs=_decode_array(payload["probs"]))
    if kind == "probability_stack":
        return ProbabilityStack(
            samples=tuple(ProbabilityMap(probs=_decode_array(s)) for s in payload["samples"]),
            seed_trace=tuple(payload.get("seed_trace", ())),
        )
    if kind == "uncertainty_map":
        return UncertaintyMap(values=_decode_array(payload["values"]))
    raise ParseError(f"unknown payload type {kind!r}")
