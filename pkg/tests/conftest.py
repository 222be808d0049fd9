import math

import pytest

from isslab.systems import BLOWUP_START

# mode-k data of the peaking examples: x_k(0) = c, y_k(0) = e
PEAK_STATE = (BLOWUP_START, math.e)
PEAK_RADIUS = math.hypot(*PEAK_STATE)


def assert_replays(report):
    """Every falsified report must carry a witness that reproduces the violation."""
    assert report.falsified
    assert report.witness is not None
    value, ok = report.witness.replay()
    assert ok, (value, report.witness)


@pytest.fixture
def peak_direction():
    return (PEAK_STATE[0] / PEAK_RADIUS, PEAK_STATE[1] / PEAK_RADIUS)
