import pathlib

import numpy as np
import pytest

from convnorm import Filter4D

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture
def tap_filter():
    """The 1x1x1x3 filter [1, 2, -1] used as the worked-example anchor."""
    return Filter4D(np.array([1.0, 2.0, -1.0]).reshape(1, 1, 1, 3))


@pytest.fixture
def arange_filter():
    return Filter4D(np.arange(2 * 3 * 2 * 2, dtype=float).reshape(2, 3, 2, 2))
