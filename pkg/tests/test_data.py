import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prostseg import ZoneCombo, validate_pair
from prostseg.data import (
    PAPER_SHAPE_COUNTS,
    DatasetManifest,
    ManifestEntry,
    PhantomParams,
    SplitSpec,
    generate_phantom,
    generate_phantom_set,
    kfold,
    load_manifest,
    read_mask_png,
    read_slice_png,
    save_manifest,
    split,
    write_mask_png,
    write_slice_png,
)
from prostseg.errors import (
    ComboMismatch,
    DegenerateGeometry,
    MissingFile,
    ParseError,
    TooFewPerCombo,
)


def synthetic_manifest(per_combo: dict[ZoneCombo, int]) -> DatasetManifest:
    entries = []
    for combo, n in per_combo.items():
        for i in range(n):
            entries.append(
                ManifestEntry(
                    slice_path=f"{combo.value}/{i}_img.png",
                    mask_path=f"{combo.value}/{i}_mask.png",
                    patient_id=f"{combo.value}-pat{i // 3}",
                    combo=combo,
                )
            )
    return DatasetManifest(entries=tuple(entries))


class TestManifestFile:
    def test_load_valid_entries(self, tmp_path, tiny_dataset):
        loaded = load_manifest(tiny_dataset.root / "manifest.json")
        assert len(loaded) == len(tiny_dataset)
        assert loaded.counts_by_combo == tiny_dataset.counts_by_combo

    def test_counts_equal_histogram(self, tiny_dataset):
        counts = tiny_dataset.counts_by_combo
        assert sum(counts.values()) == len(tiny_dataset)
        for combo in ZoneCombo:
            assert counts[combo] == sum(1 for e in tiny_dataset.entries if e.combo is combo)

    def test_combo_inferred_from_mask_when_absent(self, tmp_path):
        manifest = generate_phantom_set({ZoneCombo.CZ_PZ_TUM: 1}, seed=3, out_dir=tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        del doc["entries"][0]["combo"]
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        loaded = load_manifest(tmp_path / "manifest.json")
        assert loaded.entries[0].combo is ZoneCombo.CZ_PZ_TUM

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            load_manifest(tmp_path / "nope.json")

    def test_parse_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ParseError):
            load_manifest(p)

    def test_verify_files_detects_combo_mismatch(self, tmp_path):
        generate_phantom_set({ZoneCombo.CZ_PZ: 1}, seed=3, out_dir=tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        doc["entries"][0]["combo"] = ZoneCombo.CZ_PZ_TZ.value
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(ComboMismatch):
            load_manifest(tmp_path / "manifest.json", verify_files=True)

    def test_paper_shape_accepts_reference_histogram(self):
        manifest = synthetic_manifest(PAPER_SHAPE_COUNTS)
        assert len(manifest) == 205
        from prostseg.data import check_paper_shape

        check_paper_shape(manifest)  # should not raise

    def test_paper_shape_rejects_other_histograms(self, tmp_path):
        manifest = synthetic_manifest({ZoneCombo.CZ_PZ: 4})
        path = save_manifest(manifest, tmp_path / "m.json")
        with pytest.raises(ParseError):
            load_manifest(path, paper_shape=True)


class TestSplit:
    def test_rounding_forty_entries(self):
        # 10 per combo at 15% test: global target 6, per stratum 1..2
        manifest = synthetic_manifest({c: 10 for c in ZoneCombo})
        train, test = split(manifest, SplitSpec(seed=3))
        assert len(test) == 6
        assert len(train) == 34
        for combo, n in test.counts_by_combo.items():
            assert 1 <= n <= 2
        joined = {e.slice_path for e in train.entries} | {e.slice_path for e in test.entries}
        assert len(joined) == 40
        assert not ({e.slice_path for e in train.entries} & {e.slice_path for e in test.entries})

    def test_deterministic_for_seed(self):
        manifest = synthetic_manifest({c: 10 for c in ZoneCombo})
        a = split(manifest, SplitSpec(seed=9))
        b = split(manifest, SplitSpec(seed=9))
        assert [e.slice_path for e in a[1].entries] == [e.slice_path for e in b[1].entries]

    def test_too_few_per_combo(self):
        manifest = synthetic_manifest({ZoneCombo.CZ_PZ: 1, ZoneCombo.CZ_PZ_TZ: 5})
        with pytest.raises(TooFewPerCombo):
            split(manifest, SplitSpec(seed=0))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_permutation_invariance(self, seed):
        manifest = synthetic_manifest({c: 7 for c in ZoneCombo})
        rng = np.random.default_rng(seed)
        shuffled = DatasetManifest(
            entries=tuple(manifest.entries[i] for i in rng.permutation(len(manifest)))
        )
        a = split(manifest, SplitSpec(seed=13))
        b = split(shuffled, SplitSpec(seed=13))
        assert {e.slice_path for e in a[1].entries} == {e.slice_path for e in b[1].entries}

    def test_by_patient_keeps_patients_together(self):
        manifest = synthetic_manifest({c: 9 for c in ZoneCombo})
        train, test = split(manifest, SplitSpec(seed=1, by_patient=True))
        train_pat = {e.patient_id for e in train.entries}
        test_pat = {e.patient_id for e in test.entries}
        assert not (train_pat & test_pat)
        assert len(train) + len(test) == len(manifest)


class TestKfold:
    def test_exact_division(self):
        manifest = synthetic_manifest({c: 5 for c in ZoneCombo})
        pairs = kfold(manifest, SplitSpec(fold_count=5, seed=2))
        assert len(pairs) == 5
        for train, val in pairs:
            assert len(val) == 4
            assert all(n == 1 for n in val.counts_by_combo.values())
            assert len(train) == 16

    def test_folds_partition_manifest(self):
        manifest = synthetic_manifest({c: 7 for c in ZoneCombo})
        pairs = kfold(manifest, SplitSpec(fold_count=3, seed=2))
        all_val = [e.slice_path for _, val in pairs for e in val.entries]
        assert len(all_val) == len(set(all_val)) == len(manifest)
        for train, val in pairs:
            assert {e.slice_path for e in train.entries}.isdisjoint(
                e.slice_path for e in val.entries
            )

    def test_too_few_for_folds(self):
        manifest = synthetic_manifest({ZoneCombo.CZ_PZ: 4, ZoneCombo.CZ_PZ_TZ: 6})
        with pytest.raises(TooFewPerCombo):
            kfold(manifest, SplitSpec(fold_count=5, seed=0))


class TestPhantom:
    def test_noiseless_cz_pz(self):
        s, m = generate_phantom(PhantomParams(combo=ZoneCombo.CZ_PZ, jitter=0, noise_sigma=0, seed=7))
        assert set(np.unique(m.labels)) == {0, 1, 2}
        # noiseless rendering has exactly one intensity per class
        for label in (0, 1, 2):
            assert len(np.unique(s.pixels[m.labels == label])) == 1

    def test_deterministic(self):
        p = PhantomParams(combo=ZoneCombo.CZ_PZ_TZ, jitter=2.0, noise_sigma=0.05, seed=21)
        a_s, a_m = generate_phantom(p)
        b_s, b_m = generate_phantom(p)
        assert (a_s.pixels == b_s.pixels).all()
        assert (a_m.labels == b_m.labels).all()

    def test_full_combo_histogram(self):
        s, m = generate_phantom(PhantomParams(combo=ZoneCombo.CZ_PZ_TZ_TUM, seed=3))
        present = set(np.unique(m.labels))
        assert present == {0, 1, 2, 3, 4}
        assert (m.labels == 4).sum() > 0

    def test_degenerate_geometry(self):
        radii = {"CZ": (56.0, 48.0), "TZ": (60.0, 50.0)}  # TZ not inside CZ
        with pytest.raises(DegenerateGeometry):
            PhantomParams(combo=ZoneCombo.CZ_PZ_TZ, zone_radii=radii, seed=0)

    @given(
        st.sampled_from(list(ZoneCombo)),
        st.floats(0.0, 4.0),
        st.floats(0.0, 0.1),
        st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=15, deadline=None)
    def test_masks_satisfy_invariants(self, combo, jitter, noise, seed):
        s, m = generate_phantom(
            PhantomParams(combo=combo, jitter=jitter, noise_sigma=noise, seed=seed)
        )
        m.check()
        validate_pair(s, m)


class TestPhantomSet:
    def test_histogram_matches_request(self, tmp_path):
        request = {ZoneCombo.CZ_PZ: 2}
        manifest = generate_phantom_set(request, seed=1, out_dir=tmp_path)
        assert len(manifest) == 2
        assert manifest.counts_by_combo[ZoneCombo.CZ_PZ] == 2

    def test_all_zero_request(self, tmp_path):
        manifest = generate_phantom_set({}, seed=1, out_dir=tmp_path)
        assert len(manifest) == 0

    def test_files_round_trip(self, tiny_dataset):
        entry = tiny_dataset.entries[0]
        s = read_slice_png(tiny_dataset.resolve(entry.slice_path))
        m = read_mask_png(tiny_dataset.resolve(entry.mask_path), combo=entry.combo)
        validate_pair(s, m)

    def test_png_round_trip_exact(self, tmp_path, phantom_pair):
        s, m = phantom_pair
        write_slice_png(s, tmp_path / "s.png")
        write_mask_png(m, tmp_path / "m.png")
        s2 = read_slice_png(tmp_path / "s.png")
        m2 = read_mask_png(tmp_path / "m.png")
        assert (s2.pixels == s.pixels).all()
        assert (m2.labels == m.labels).all()
        assert m2.combo is m.combo
