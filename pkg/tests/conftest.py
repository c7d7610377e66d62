import numpy as np
import pytest

from lambdacover.tree import Params


@pytest.fixture
def half():
    return lambda n: Params(0.5, n)


def within_se(mean, se, target, k=3.0):
    return abs(mean - target) <= k * se
