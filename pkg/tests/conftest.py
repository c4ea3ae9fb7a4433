import numpy as np
import pytest
import torch

from fusesep.config import SeparatorConfig
from fusesep.signals import generate_dataset


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(**overrides) -> SeparatorConfig:
    """Desk-scale architecture small enough for per-test forward passes."""
    base = dict(
        n_sources=2,
        n_filters=32,
        feature_dim=16,
        window=16,
        stride=8,
        chunk_len=32,
        chunk_hop=16,
        variant="msfft2p",
        n_stages=2,
        n_intra=1,
        n_inter=1,
        n_heads=4,
        ffn_dim=64,
    )
    base.update(overrides)
    return SeparatorConfig(**base)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """Four 1-second 2-source mixtures shared by trainer/CLI tests."""
    root = tmp_path_factory.mktemp("data")
    generate_dataset(
        n_examples=4, c_sources=2, snr_range_db=(-5.0, 5.0), seed=7,
        out_dir=root, duration_s=1.0,
    )
    return root
