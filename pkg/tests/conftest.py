import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rfimap.nominal import NominalModel, discretize
from rfimap.regions import RegionConfig, ThresholdEllipse, build_regions

# verdict lines from test_acceptance, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


settings.register_profile("rfimap", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("rfimap")


def make_model(mean=(-200.0, 45.0), cov=((1.0, 0.0), (0.0, 1.0)), n_points=1000):
    return NominalModel(mean, cov, discretize(mean, np.asarray(cov)), n_points=n_points)


def circle_regions(radius=3.0, center=(-200.0, 45.0), **cfg):
    model = make_model(center)
    return build_regions(model, ThresholdEllipse(center, (radius, radius), 0.0), RegionConfig(**cfg))


@pytest.fixture
def unit_model():
    return make_model()


@pytest.fixture
def circle():
    """Circle of radius 3 at (-200, 45), slope -1 boundary, floor 27."""
    return circle_regions()


def fletcher_oracle(body: bytes) -> bytes:
    """Standalone two-accumulator mod-256 checksum."""
    a = sum(body) % 256
    b = sum((len(body) - i) * x for i, x in enumerate(body)) % 256
    return bytes([a, b])


SQRT_HALF = math.sqrt(0.5)
