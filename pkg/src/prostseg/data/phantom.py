"""Synthetic zonal phantoms standing in for the private MRI dataset.

A phantom is a nested-ellipse rendering of the prostate zones: CZ is an
ellipse around the gland center, TZ a smaller ellipse inside it, PZ the
crescent between CZ and a larger posterior ellipse, and TUM a blob placed
on the CZ boundary so it intersects CZ or PZ tissue. Each zone renders
with a distinct mean intensity, optional boundary jitter, and optional
Gaussian intensity noise. Generation is deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..domain import CANONICAL_SIZE, ClassLabel, MriSlice, ZoneCombo, ZoneMask, validate_pair
from ..errors import DegenerateGeometry
from .manifest import DatasetManifest, ManifestEntry, save_manifest
from .serialization import quantize_intensities, write_mask_png, write_slice_png

#: Mean rendered intensity per class; values are deliberately well separated.
ZONE_INTENSITY: dict[ClassLabel, float] = {
    ClassLabel.BG: 0.12,
    ClassLabel.CZ: 0.55,
    ClassLabel.PZ: 0.35,
    ClassLabel.TZ: 0.75,
    ClassLabel.TUM: 0.92,
}

DEFAULT_RADII: dict[str, tuple[float, float]] = {
    "CZ": (56.0, 48.0),
    "PZ": (84.0, 70.0),
    "TZ": (28.0, 22.0),
    "TUM": (13.0, 13.0),
}


@dataclass(frozen=True)
class PhantomParams:
    """Geometry and noise controls for one synthetic slice."""

    combo: ZoneCombo
    zone_radii: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_RADII)
    )
    jitter: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        radii = dict(DEFAULT_RADII)
        radii.update(self.zone_radii)
        object.__setattr__(self, "zone_radii", radii)
        cz, tz, pz = radii["CZ"], radii["TZ"], radii["PZ"]
        if not (tz[0] < cz[0] and tz[1] < cz[1]):
            raise DegenerateGeometry("TZ ellipse must nest strictly inside CZ")
        if not (pz[0] > cz[0] and pz[1] > cz[1]):
            raise DegenerateGeometry("PZ outer ellipse must enclose CZ")
        if min(r for pair in radii.values() for r in pair) <= 0:
            raise DegenerateGeometry("all ellipse axes must be positive")


def _boundary_modulation(rng: np.random.Generator, theta: np.ndarray, jitter: float,
                         mean_radius: float) -> np.ndarray:
    """Smooth radial perturbation of roughly ``jitter`` pixels amplitude."""
    if jitter == 0:
        return np.zeros_like(theta)
    out = np.zeros_like(theta)
    for k in range(1, 4):
        a, b = rng.normal(0.0, 1.0, size=2) / k
        out += a * np.sin(k * theta) + b * np.cos(k * theta)
    return out * (jitter / (2.0 * mean_radius))


def generate_phantom(params: PhantomParams) -> tuple[MriSlice, ZoneMask]:
    """Render one (slice, mask) pair; deterministic for a fixed seed."""
    rng = np.random.default_rng(params.seed)
    size = CANONICAL_SIZE
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    cy = size / 2 + rng.uniform(-12, 12)
    cx = size / 2 + rng.uniform(-12, 12)

    def region(center_y, center_x, ry, rx, jitter_rng=None):
        dy, dx = yy - center_y, xx - center_x
        rho = np.sqrt((dy / ry) ** 2 + (dx / rx) ** 2)
        if params.jitter > 0 and jitter_rng is not None:
            theta = np.arctan2(dy, dx)
            rho = rho - _boundary_modulation(jitter_rng, theta, params.jitter, (ry + rx) / 2)
        return rho <= 1.0

    radii = params.zone_radii
    pz_outer = region(cy + 0.25 * radii["CZ"][0], cx, *radii["PZ"], jitter_rng=rng)
    cz = region(cy, cx, *radii["CZ"], jitter_rng=rng)
    tz = region(cy, cx, *radii["TZ"], jitter_rng=rng)

    labels = np.zeros((size, size), dtype=np.uint8)
    wanted = params.combo.zone_labels
    labels[pz_outer & ~cz] = ClassLabel.PZ
    labels[cz] = ClassLabel.CZ
    if ClassLabel.TZ in wanted:
        labels[tz] = ClassLabel.TZ
    if ClassLabel.TUM in wanted:
        angle = rng.uniform(0, 2 * np.pi)
        ty = cy + 0.95 * radii["CZ"][0] * np.sin(angle)
        tx = cx + 0.95 * radii["CZ"][1] * np.cos(angle)
        blob = region(ty, tx, *radii["TUM"], jitter_rng=rng)
        tumor = blob & ((labels == ClassLabel.CZ) | (labels == ClassLabel.PZ))
        labels[tumor] = ClassLabel.TUM

    present = {int(v) for v in np.unique(labels)} - {int(ClassLabel.BG)}
    expected = {int(l) for l in wanted}
    if present != expected:
        missing = sorted(ClassLabel(v).name for v in expected - present)
        raise DegenerateGeometry(f"requested zones rendered empty: {missing}")

    intensity = np.empty((size, size), dtype=np.float64)
    for label in ClassLabel:
        intensity[labels == label] = ZONE_INTENSITY[label]
    if params.noise_sigma > 0:
        intensity = intensity + rng.normal(0.0, params.noise_sigma, intensity.shape)
    intensity = quantize_intensities(np.clip(intensity, 0.0, 1.0))

    slice_ = MriSlice(pixels=intensity)
    mask = ZoneMask(labels=labels, combo=params.combo)
    validate_pair(slice_, mask)
    return slice_, mask


#: Slices per synthetic patient when generating sets.
_SLICES_PER_PATIENT = 11


def generate_phantom_set(
    n_per_combo: dict[ZoneCombo, int],
    seed: int,
    out_dir: Path | str,
    jitter: float = 2.0,
    noise_sigma: float = 0.02,
) -> DatasetManifest:
    """Write a phantom dataset to disk and return its manifest.

    Per-phantom seeds derive from ``seed`` so the set is reproducible, and
    nominal radii vary mildly between phantoms for geometric diversity.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: list[ManifestEntry] = []

    for combo_idx, combo in enumerate(ZoneCombo):
        count = int(n_per_combo.get(combo, 0))
        if count < 0:
            raise ValueError("phantom counts must be >= 0")
        combo_dir = out_dir / combo.value
        if count:
            combo_dir.mkdir(exist_ok=True)
        for i in range(count):
            phantom_seed = int(
                np.random.SeedSequence([seed, combo_idx, i]).generate_state(1)[0]
            )
            scale_rng = np.random.default_rng(phantom_seed + 1)
            radii = {
                zone: (ry * scale_rng.uniform(0.85, 1.15), rx * scale_rng.uniform(0.85, 1.15))
                for zone, (ry, rx) in DEFAULT_RADII.items()
            }
            params = PhantomParams(
                combo=combo,
                zone_radii=radii,
                jitter=jitter,
                noise_sigma=noise_sigma,
                seed=phantom_seed,
            )
            slice_, mask = generate_phantom(params)

            stem = f"{combo.value}_{i:03d}"
            slice_rel = f"{combo.value}/{stem}_img.png"
            mask_rel = f"{combo.value}/{stem}_mask.png"
            write_slice_png(slice_, out_dir / slice_rel)
            write_mask_png(mask, out_dir / mask_rel)
            entries.append(
                ManifestEntry(
                    slice_path=slice_rel,
                    mask_path=mask_rel,
                    patient_id=f"P{combo_idx}{i // _SLICES_PER_PATIENT:03d}",
                    combo=combo,
                )
            )

    manifest = DatasetManifest(entries=tuple(entries), root=out_dir)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
