import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reenact import synthdata
from reenact.config import ProviderConfig
from reenact.perception import PerceptionProviders


@pytest.fixture(scope="session")
def tiny_dataset() -> synthdata.Dataset:
    return synthdata.generate_dataset(persons=3, frames=6, size=(128, 80), seed=101)


@pytest.fixture(scope="session")
def providers() -> PerceptionProviders:
    return PerceptionProviders.build(ProviderConfig())


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def sample_record(tiny_dataset):
    return tiny_dataset.records[0]
