import numpy as np
import pytest

from prostseg import ZoneCombo
from prostseg.data import PhantomParams, generate_phantom, generate_phantom_set
from prostseg.models import ArchitectureSpec, Family


def miniature_spec(family: Family, dropout_rate: float = 0.3) -> ArchitectureSpec:
    """Smallest spec that still exercises every block type of the family.

    All of these land well under 1k parameters, which keeps gradient
    checks against finite differences cheap.
    """
    if family is Family.SWIN_UNET:
        return ArchitectureSpec(
            family=family,
            depth=2,
            base_channels=2,
            window_size=2,
            dropout_rate=dropout_rate,
        )
    return ArchitectureSpec(
        family=family,
        depth=2,
        base_channels=2,
        channel_growth=1,
        convs_per_block=1,
        growth_rate=1,
        dense_layers=2,
        recurrence_steps=2,
        dropout_rate=dropout_rate,
    )


def overfit_spec(family: Family, dropout_rate: float = 0.0) -> ArchitectureSpec:
    """Small-but-capable spec used for convergence checks on phantoms."""
    if family is Family.SWIN_UNET:
        return ArchitectureSpec(
            family=family,
            depth=2,
            base_channels=16,
            window_size=8,
            dropout_rate=dropout_rate,
        )
    return ArchitectureSpec(
        family=family,
        depth=2,
        base_channels=8,
        growth_rate=4,
        dense_layers=2,
        dropout_rate=dropout_rate,
    )


@pytest.fixture(scope="session")
def phantom_pair():
    return generate_phantom(
        PhantomParams(combo=ZoneCombo.CZ_PZ_TZ_TUM, seed=7, jitter=1.5, noise_sigma=0.02)
    )


@pytest.fixture(scope="session")
def clean_pair():
    return generate_phantom(PhantomParams(combo=ZoneCombo.CZ_PZ, seed=7))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """8 phantoms (2 per combo) on disk with a manifest."""
    root = tmp_path_factory.mktemp("tinyset")
    manifest = generate_phantom_set(
        {combo: 2 for combo in ZoneCombo}, seed=5, out_dir=root, jitter=1.0, noise_sigma=0.01
    )
    return manifest


@pytest.fixture(scope="session")
def noiseless_dataset(tmp_path_factory):
    """8 noiseless phantoms used by convergence checks."""
    root = tmp_path_factory.mktemp("noiseless")
    return generate_phantom_set(
        {combo: 2 for combo in ZoneCombo}, seed=11, out_dir=root, jitter=0.0, noise_sigma=0.0
    )


def random_labels(rng: np.random.Generator, shape=(8, 8), k: int = 5) -> np.ndarray:
    return rng.integers(0, k, size=shape).astype(np.uint8)


def random_probs(rng: np.random.Generator, shape=(8, 8), k: int = 5) -> np.ndarray:
    raw = rng.random(size=shape + (k,)) + 1e-3
    return (raw / raw.sum(axis=-1, keepdims=True)).astype(np.float32)
