import numpy as np
import pytest

from shortcutforge import AttributeCodebook, ShortcutSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def binary5_codebook():
    return AttributeCodebook(("a", "b", "c", "d", "e"), (2,) * 5, seed=42)


@pytest.fixture
def class4_codebook():
    return AttributeCodebook(("shape",), (4,), seed=42)


@pytest.fixture
def sensor_spec():
    return ShortcutSpec("sensor", epsilon=4.0 / 255.0, seed=42)


def random_image(rng, h=32, w=32, c=3, lo=0.2, hi=0.8):
    return rng.uniform(lo, hi, size=(h, w, c))
