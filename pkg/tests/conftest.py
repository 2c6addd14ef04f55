import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hdgan.feature_store import open_store
from hdgan.synthetic import build_synthetic_store


@pytest.fixture(scope="session")
def small_store(tmp_path_factory):
    """Shared 12-image 64x64 synthetic store (noise 0.25)."""
    root = tmp_path_factory.mktemp("store") / "s"
    build_synthetic_store(seed=2024, n_images=12, size=64, out_dir=root)
    handle = open_store(root)
    yield handle
    handle.close()


@pytest.fixture(scope="session")
def clean_store(tmp_path_factory):
    """Shared noise-free store: features are exact class prototypes.

    Three shapes per image keeps the boundary-pixel share low, so masks are
    dominated by the perfectly separable interior.
    """
    root = tmp_path_factory.mktemp("store0") / "s"
    build_synthetic_store(
        seed=31, n_images=8, size=64, out_dir=root, noise_sigma=0.0, n_shapes=3
    )
    handle = open_store(root)
    yield handle
    handle.close()
