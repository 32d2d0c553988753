"""Dataset manifest, stratified train/test split, and stratified k-fold.

The manifest file is JSON:

    {"version": 1,
     "entries": [{"slice_path": ..., "mask_path": ..., "patient_id": ..., "combo": ...}]}

Paths are stored relative to the manifest file when possible. Splits are
stratified by zone combination and are invariant to the order entries
appear in the file: membership depends only on the entry set and the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..domain import ZoneCombo
from ..errors import ComboMismatch, MissingFile, ParseError, TooFewPerCombo
from .serialization import read_mask_png

MANIFEST_VERSION = 1

#: Test-set histogram of the reference dataset shape (205 images total).
PAPER_SHAPE_COUNTS: dict[ZoneCombo, int] = {
    ZoneCombo.CZ_PZ: 73,
    ZoneCombo.CZ_PZ_TZ: 68,
    ZoneCombo.CZ_PZ_TUM: 23,
    ZoneCombo.CZ_PZ_TZ_TUM: 41,
}


@dataclass(frozen=True)
class ManifestEntry:
    slice_path: str
    mask_path: str
    patient_id: str
    combo: ZoneCombo

    def sort_key(self) -> tuple[str, str]:
        return (self.patient_id, self.slice_path)


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    root: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def counts_by_combo(self) -> dict[ZoneCombo, int]:
        counts = {combo: 0 for combo in ZoneCombo}
        for e in self.entries:
            counts[e.combo] += 1
        return counts

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def by_combo(self) -> dict[ZoneCombo, list[ManifestEntry]]:
        groups: dict[ZoneCombo, list[ManifestEntry]] = {combo: [] for combo in ZoneCombo}
        for e in self.entries:
            groups[e.combo].append(e)
        return {c: g for c, g in groups.items() if g}

    def digest(self) -> str:
        """Stable identity of the entry set, independent of file order."""
        import hashlib

        keys = sorted(f"{e.slice_path}|{e.mask_path}|{e.combo.value}" for e in self.entries)
        return hashlib.sha256("\n".join(keys).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SplitSpec:
    """Stratified split/fold configuration.

    ``by_patient`` keeps all slices of one patient on the same side; the
    per-combo proportion guarantee is then best-effort rather than exact.
    """

    train_fraction: float = 0.85
    fold_count: int = 5
    seed: int = 0
    by_patient: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.fold_count < 2:
            raise ValueError("fold_count must be at least 2")


def check_paper_shape(manifest: DatasetManifest) -> None:
    counts = manifest.counts_by_combo
    if len(manifest) != 205 or any(
        counts[c] != n for c, n in PAPER_SHAPE_COUNTS.items()
    ):
        got = {c.value: counts[c] for c in ZoneCombo}
        raise ParseError(
            f"manifest does not have the reference shape "
            f"(expected 73/68/23/41, total 205; got {got})"
        )


def load_manifest(
    path: Path | str,
    paper_shape: bool = False,
    verify_files: bool = False,
) -> DatasetManifest:
    """Parse and validate a manifest file.

    When an entry omits its combo, the mask is read and the combo inferred
    from the labels present. With ``verify_files`` every path is checked and
    every declared combo is cross-checked against its mask.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or raw.get("version") != MANIFEST_VERSION:
        raise ParseError(f"manifest version must be {MANIFEST_VERSION}")
    if not isinstance(raw.get("entries"), list):
        raise ParseError("manifest must contain an 'entries' list")

    root = path.parent
    entries: list[ManifestEntry] = []
    for i, item in enumerate(raw["entries"]):
        try:
            slice_path = item["slice_path"]
            mask_path = item["mask_path"]
            patient_id = item.get("patient_id", "")
            combo_raw = item.get("combo")
        except (TypeError, KeyError) as exc:
            raise ParseError(f"entry {i} is malformed: {exc}") from exc
        mask_abs = root / mask_path if not Path(mask_path).is_absolute() else Path(mask_path)
        slice_abs = root / slice_path if not Path(slice_path).is_absolute() else Path(slice_path)
        if combo_raw is None:
            combo = read_mask_png(mask_abs).combo
        else:
            try:
                combo = ZoneCombo(combo_raw)
            except ValueError as exc:
                raise ParseError(f"entry {i} has unknown combo {combo_raw!r}") from exc
        if verify_files:
            if not slice_abs.exists():
                raise MissingFile(f"entry {i}: slice file missing: {slice_abs}")
            inferred = read_mask_png(mask_abs).combo
            if inferred != combo:
                raise ComboMismatch(
                    f"entry {i}: declared combo {combo.value} but mask labels imply "
                    f"{inferred.value}"
                )
        entries.append(ManifestEntry(slice_path, mask_path, patient_id, combo))

    manifest = DatasetManifest(entries=tuple(entries), root=root)
    if paper_shape:
        check_paper_shape(manifest)
    return manifest


def save_manifest(manifest: DatasetManifest, path: Path | str) -> Path:
    """Write the manifest; entry paths are rebased onto the file's directory."""
    import os

    path = Path(path)

    def rebase(rel: str) -> str:
        if manifest.root is None or Path(rel).is_absolute():
            return rel
        return os.path.relpath(manifest.resolve(rel), path.parent)

    doc = {
        "version": MANIFEST_VERSION,
        "entries": [
            {
                "slice_path": rebase(e.slice_path),
                "mask_path": rebase(e.mask_path),
                "patient_id": e.patient_id,
                "combo": e.combo.value,
            }
            for e in manifest.entries
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def _canonical_shuffled(
    entries: list[ManifestEntry], rng: np.random.Generator
) -> list[ManifestEntry]:
    """Seeded shuffle over a canonical ordering, so results do not depend on
    the order entries appeared in the manifest file."""
    ordered = sorted(entries, key=ManifestEntry.sort_key)
    perm = rng.permutation(len(ordered))
    return [ordered[i] for i in perm]


def _largest_remainder(targets: list[float], total: int) -> list[int]:
    """Integer allocation summing to ``total`` that stays within 1 of each target."""
    floors = [int(np.floor(t)) for t in targets]
    short = total - sum(floors)
    order = sorted(range(len(targets)), key=lambda i: (-(targets[i] - floors[i]), i))
    out = list(floors)
    for i in order[:short]:
        out[i] += 1
    return out


def split(manifest: DatasetManifest, spec: SplitSpec) -> tuple[DatasetManifest, DatasetManifest]:
    """Stratified train/test split.

    Per-combo test counts follow the largest-remainder rule against the
    global test target, so each stratum lands within one item of its ideal
    proportion. Deterministic in ``spec.seed`` and invariant to entry order.
    """
    groups = manifest.by_combo()
    for combo, members in groups.items():
        if len(members) < 2:
            raise TooFewPerCombo(
                f"combo {combo.value} has {len(members)} entries; need at least 2 to split"
            )

    test_fraction = 1.0 - spec.train_fraction
    combos = [c for c in ZoneCombo if c in groups]
    total_test = int(round(test_fraction * len(manifest)))
    total_test = min(max(total_test, len(combos)), len(manifest) - len(combos))
    targets = [test_fraction * len(groups[c]) for c in combos]
    counts = _largest_remainder(targets, total_test)
    # every stratum keeps at least one entry on each side
    counts = [min(max(n, 1), len(groups[c]) - 1) for n, c in zip(counts, combos)]

    rng = np.random.default_rng(spec.seed)
    train: list[ManifestEntry] = []
    test: list[ManifestEntry] = []
    for combo, n_test in zip(combos, counts):
        if spec.by_patient:
            tr, te = _split_group_by_patient(groups[combo], n_test, rng)
        else:
            shuffled = _canonical_shuffled(groups[combo], rng)
            te, tr = shuffled[:n_test], shuffled[n_test:]
        train.extend(tr)
        test.extend(te)

    train.sort(key=ManifestEntry.sort_key)
    test.sort(key=ManifestEntry.sort_key)
    return (
        DatasetManifest(entries=tuple(train), root=manifest.root),
        DatasetManifest(entries=tuple(test), root=manifest.root),
    )


def _split_group_by_patient(
    members: list[ManifestEntry], n_test: int, rng: np.random.Generator
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    by_patient: dict[str, list[ManifestEntry]] = {}
    for e in sorted(members, key=ManifestEntry.sort_key):
        by_patient.setdefault(e.patient_id, []).append(e)
    patients = list(by_patient)
    perm = rng.permutation(len(patients))
    test: list[ManifestEntry] = []
    chosen = []
    for i in perm:
        if len(test) >= n_test or len(chosen) >= len(patients) - 1:
            break
        chosen.append(patients[i])
        test.extend(by_patient[patients[i]])
    test_set = {id(e) for e in test}
    train = [e for p in patients for e in by_patient[p] if p not in chosen]
    return train, test


def kfold(
    manifest: DatasetManifest, spec: SplitSpec
) -> list[tuple[DatasetManifest, DatasetManifest]]:
    """Stratified k-fold partition into (train, validation) pairs.

    Validation folds are pairwise disjoint, cover the manifest exactly, and
    preserve per-combo proportions within one item.
    """
    k = spec.fold_count
    groups = manifest.by_combo()
    for combo, members in groups.items():
        if len(members) < k:
            raise TooFewPerCombo(
                f"combo {combo.value} has {len(members)} entries; need at least {k} "
                f"for {k}-fold validation"
            )

    rng = np.random.default_rng(spec.seed)
    folds: list[list[ManifestEntry]] = [[] for _ in range(k)]
    for combo in ZoneCombo:
        if combo not in groups:
            continue
        shuffled = _canonical_shuffled(groups[combo], rng)
        for i, entry in enumerate(shuffled):
            folds[i % k].append(entry)

    out: list[tuple[DatasetManifest, DatasetManifest]] = []
    for i in range(k):
        val = sorted(folds[i], key=ManifestEntry.sort_key)
        train = sorted(
            (e for j, fold in enumerate(folds) if j != i for e in fold),
            key=ManifestEntry.sort_key,
        )
        out.append(
            (
                DatasetManifest(entries=tuple(train), root=manifest.root),
                DatasetManifest(entries=tuple(val), root=manifest.root),
            )
        )
    return out
