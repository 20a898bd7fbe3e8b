import numpy as np
import pytest

from relaxkv import Frame


def make_frame(fid, key_rows, layers=1, value_rows=None):
    """Frame with explicit key rows (tokens x dim), repeated per layer."""
    keys = np.tile(np.asarray(key_rows, dtype=float)[None], (layers, 1, 1))
    if value_rows is None:
        values = np.zeros_like(keys)
    else:
        values = np.tile(np.asarray(value_rows, dtype=float)[None], (layers, 1, 1))
    return Frame(id=fid, keys=keys, values=values)


def random_unit(rng, dim):
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
