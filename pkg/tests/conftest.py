"""Shared fixtures: planted instances, measurement builders, hypothesis profile."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blockcs.sensing import Measurement, MeasurementSet, make_pixel_mask

settings.register_profile(
    "ci",
    deadline=None,
    max_examples=25,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def full_observation(signal_matrix: np.ndarray) -> MeasurementSet:
    """Identity sensing of every column of an n x N matrix."""
    n = signal_matrix.shape[0]
    sensor = make_pixel_mask(n, range(n))
    return MeasurementSet(
        Measurement(y=sensor.apply(signal_matrix[:, i]), sensor=sensor)
        for i in range(signal_matrix.shape[1])
    )
