import math

import numpy as np
import pytest
from hypothesis import settings

from ehwsn.model import ExperimentConfig, HarvestModel, PowerPolicy, Priors, SensorModel

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def make_config(n=1, capacity=3, coeffs=(0.5, 1.0), rate=2.0, pi0=0.5, amplitude=1.0,
                obs_noise_var=1.0, ch_noise_var=1.0, mean_sq_gain=2.0, **kw):
    sensor = SensorModel(obs_noise_var, ch_noise_var, mean_sq_gain, signal_amplitude=amplitude)
    return ExperimentConfig((sensor,) * n, PowerPolicy(capacity, tuple(coeffs)), HarvestModel(rate),
                            Priors(pi0), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


INF = math.inf
