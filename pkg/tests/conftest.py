import numpy as np
import pytest

import stridesim as ss


@pytest.fixture(scope="session")
def model():
    return ss.load_default_model()


@pytest.fixture(scope="session")
def model_dict():
    import yaml

    from stridesim.model import default_model_path

    return yaml.safe_load(default_model_path().read_text())


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
