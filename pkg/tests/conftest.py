"""Shared fixtures: default config pieces used across the suite."""
import numpy as np
import pytest

from v2vlink import ExperimentConfig, make_game, make_model


@pytest.fixture(scope="session")
def config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def model(config):
    return make_model(config)


@pytest.fixture(scope="session")
def game1(config):
    return make_game(config, 1)


@pytest.fixture(scope="session")
def game2(config):
    return make_game(config, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
