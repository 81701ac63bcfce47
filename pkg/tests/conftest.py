"""Shared fixtures: fixed-output networks and small synthetic splits."""

import numpy as np
import pytest

from certsmooth.data import make_splits
from certsmooth.model import NetworkParams, zero_params


def constant_network(d: int, k: int, c: int, head: str = "classifier") -> NetworkParams:
    """Single-layer network whose output is (numerically) one-hot on class c."""
    params = zero_params([d, k], head=head)
    params.biases[-1][c] = 50.0
    return params


def sign_network() -> NetworkParams:
    """1-d classifier: class 0 when x > 0, class 1 otherwise."""
    params = zero_params([1, 2])
    params.weights[0][0] = [1.0, -1.0]
    return params


@pytest.fixture
def constant_classifier():
    return constant_network


@pytest.fixture
def sign_classifier() -> NetworkParams:
    return sign_network()


@pytest.fixture
def tiny_splits():
    return make_splits("blobs", d=4, k=3, n_train=60, n_test=12, separation=6.0, blob_std=1.0, seed=7)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
