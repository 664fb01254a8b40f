from pathlib import Path

import numpy as np
import pytest

from clustab.data import VariationMatrix

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).resolve().parent / "fixtures"
CONFIGS = ROOT / "configs"


def vm(rows, kind="diff", ids=None):
    rows = np.asarray(rows, dtype=float)
    ids = ids or [f"a{i}" for i in range(rows.shape[0])]
    return VariationMatrix(tuple(ids), tuple(range(1, rows.shape[1] + 1)), rows, kind, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
