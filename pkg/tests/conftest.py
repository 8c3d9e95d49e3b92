import math
from pathlib import Path

import numpy as np
import pytest

from noetherlab.core import State
from noetherlab.harness.checks import Context
from noetherlab.harness.config import load_config
from noetherlab.systems import cms, oscillator, spheroid

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def config_dir():
    return CONFIGS


def _ctx(name):
    return Context(load_config(CONFIGS / f"{name}.yaml"))


@pytest.fixture(scope="session")
def osc_ctx():
    return _ctx("oscillator")


@pytest.fixture(scope="session")
def osc_plus_ctx():
    return _ctx("oscillator_beta_plus")


@pytest.fixture(scope="session")
def geo_ctx():
    return _ctx("spheroid")


@pytest.fixture(scope="session")
def cms_ctx():
    return _ctx("cms")


@pytest.fixture
def sine_osc():
    """omega = 1 with sigma = sin t."""
    def make(beta):
        return oscillator.OscillatorParams(beta=beta, omega=1.0, sigma0=(0.0, 1.0), t0=0.0,
                                           t_range=(-1.0, 10.0))
    return make


@pytest.fixture
def cms_state():
    return State(0.3, [-1.2, 0.4, 1.9], [0.7, -0.3, 0.2])


@pytest.fixture
def geo_state():
    return State(0.0, [1.1, 0.4], [0.35, 0.8])


def rel_err(a, b):
    return abs(a - b) / max(1.0, abs(b))
