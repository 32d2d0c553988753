import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prostseg import (
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
from prostseg.data import from_payload, to_payload
from prostseg.errors import ComboMismatch, EmptyStack, IllegalLabel, ShapeMismatch


def make_slice(value=0.5):
    return MriSlice(pixels=np.full((CANONICAL_SIZE, CANONICAL_SIZE), value, np.float32))


def make_mask(labels_present, combo, size=CANONICAL_SIZE):
    lab = np.zeros((size, size), np.uint8)
    for i, label in enumerate(sorted(labels_present)):
        lab[i, :] = label
    return ZoneMask(labels=lab, combo=combo)


class TestClassLabel:
    def test_exactly_five_labels_with_bg_zero(self):
        assert len(ClassLabel) == NUM_CLASSES == 5
        assert ClassLabel.BG == 0
        assert [l.name for l in ClassLabel] == ["BG", "CZ", "PZ", "TZ", "TUM"]

    def test_names_unique(self):
        assert len({l.name for l in ClassLabel}) == 5


class TestZoneCombo:
    def test_bijection_always_contains_cz_pz(self):
        seen = set()
        for combo in ZoneCombo:
            labels = combo.zone_labels
            assert {ClassLabel.CZ, ClassLabel.PZ} <= labels
            assert labels not in seen
            seen.add(labels)
            assert ZoneCombo.from_labels(int(l) for l in labels) is combo

    def test_from_labels_rejects_unknown_set(self):
        with pytest.raises(ComboMismatch):
            ZoneCombo.from_labels([1])  # CZ alone matches nothing


class TestMriSlice:
    def test_canonical_resolution_enforced(self):
        with pytest.raises(ShapeMismatch):
            MriSlice(pixels=np.zeros((128, 128), np.float32))

    def test_intensity_range_enforced(self):
        bad = np.full((CANONICAL_SIZE, CANONICAL_SIZE), 1.5, np.float32)
        with pytest.raises(ValueError):
            MriSlice(pixels=bad)

    def test_non_finite_rejected(self):
        bad = np.zeros((CANONICAL_SIZE, CANONICAL_SIZE), np.float32)
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            MriSlice(pixels=bad)

    def test_immutable(self):
        s = make_slice()
        with pytest.raises(ValueError):
            s.pixels[0, 0] = 0.0


class TestValidatePair:
    def test_consistent_pair_valid(self):
        s = make_slice()
        m = make_mask({1, 2}, ZoneCombo.CZ_PZ)
        assert validate_pair(s, m) == (s, m)

    def test_shape_mismatch(self):
        s = make_slice()
        m = make_mask({1, 2}, ZoneCombo.CZ_PZ, size=128)
        with pytest.raises(ShapeMismatch):
            validate_pair(s, m)

    def test_illegal_label(self):
        s = make_slice()
        lab = np.zeros((CANONICAL_SIZE, CANONICAL_SIZE), np.uint8)
        lab[0, 0] = 7
        m = ZoneMask(labels=lab, combo=ZoneCombo.CZ_PZ)
        with pytest.raises(IllegalLabel):
            validate_pair(s, m)

    def test_combo_mismatch(self):
        s = make_slice()
        m = make_mask({1, 2, 3}, ZoneCombo.CZ_PZ)  # TZ present but combo says CZ+PZ
        with pytest.raises(ComboMismatch):
            validate_pair(s, m)


class TestProbabilityMap:
    def test_rejects_bad_sums(self):
        p = np.full((4, 4, 5), 0.3, np.float32)
        with pytest.raises(ValueError):
            ProbabilityMap(probs=p)

    def test_rejects_negatives(self):
        p = np.zeros((2, 2, 5), np.float32)
        p[..., 0] = 1.2
        p[..., 1] = -0.2
        with pytest.raises(ValueError):
            ProbabilityMap(probs=p)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_argmax_is_valid_label(self, seed):
        rng = np.random.default_rng(seed)
        raw = rng.random((6, 6, 5)) + 1e-6
        pm = ProbabilityMap(probs=(raw / raw.sum(-1, keepdims=True)).astype(np.float32))
        decoded = pm.argmax_labels()
        assert set(np.unique(decoded)) <= {int(l) for l in ClassLabel}

    def test_argmax_tie_breaks_low(self):
        p = np.zeros((1, 1, 5), np.float32)
        p[0, 0, 1] = 0.5
        p[0, 0, 3] = 0.5
        assert ProbabilityMap(probs=p).argmax_labels()[0, 0] == 1


class TestProbabilityStack:
    def test_needs_one_sample(self):
        with pytest.raises(EmptyStack):
            ProbabilityStack(samples=())

    def test_shape_consistency(self):
        a = ProbabilityMap(probs=np.full((2, 2, 5), 0.2, np.float32))
        b = ProbabilityMap(probs=np.full((3, 3, 5), 0.2, np.float32))
        with pytest.raises(ShapeMismatch):
            ProbabilityStack(samples=(a, b))


class TestUncertaintyMap:
    def test_range_enforced(self):
        with pytest.raises(ValueError):
            UncertaintyMap(values=np.full((2, 2), 1.5, np.float32))


class TestRoundTrip:
    """serialize -> deserialize is the identity for every domain type."""

    def test_slice(self):
        rng = np.random.default_rng(0)
        grid = (rng.integers(0, 65536, (CANONICAL_SIZE, CANONICAL_SIZE)) / 65535).astype(
            np.float32
        )
        s = MriSlice(pixels=grid, patient_id="p1", slice_id="s1")
        s2 = from_payload(to_payload(s))
        assert (s2.pixels == s.pixels).all()
        assert (s2.patient_id, s2.slice_id) == ("p1", "s1")

    def test_mask(self):
        m = make_mask({1, 2, 4}, ZoneCombo.CZ_PZ_TUM)
        m2 = from_payload(to_payload(m))
        assert (m2.labels == m.labels).all() and m2.combo is m.combo

    def test_probability_map_and_stack(self):
        rng = np.random.default_rng(1)
        raw = rng.random((4, 4, 5)) + 1e-6
        pm = ProbabilityMap(probs=(raw / raw.sum(-1, keepdims=True)).astype(np.float32))
        assert (from_payload(to_payload(pm)).probs == pm.probs).all()
        stack = ProbabilityStack(samples=(pm, pm), seed_trace=(3, 4))
        stack2 = from_payload(to_payload(stack))
        assert stack2.seed_trace == (3, 4)
        assert all((a.probs == b.probs).all() for a, b in zip(stack.samples, stack2.samples))

    def test_uncertainty_map(self):
        u = UncertaintyMap(values=np.linspace(0, 1, 16, dtype=np.float32).reshape(4, 4))
        assert (from_payload(to_payload(u)).values == u.values).all()
