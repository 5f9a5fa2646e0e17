from pathlib import Path

import pytest

from ovsg.embedding import EmbeddingProvider

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def stub() -> EmbeddingProvider:
    return EmbeddingProvider(stub=True, stub_seed=42, stub_dim=64)
