from pathlib import Path

import numpy as np
import pytest

from infa._kernels import BACKENDS

ROOT = Path(__file__).resolve().parents[1]
UCR = ROOT / "data" / "ucr"

AVAILABLE_BACKENDS = [name for name, mod in BACKENDS.items() if mod is not None]


def ucr_pair(name):
    """(train, test) paths for a bundled UCR dataset."""
    for ext in ("tsv", "txt"):
        tr, te = UCR / f"{name}_TRAIN.{ext}", UCR / f"{name}_TEST.{ext}"
        if tr.exists():
            return tr, te
    pytest.skip(f"{name} not bundled")


@pytest.fixture(params=AVAILABLE_BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
