import numpy as np
import pytest

from roughplane.covariance import CovarianceModel
from roughplane.field import GridSpec, sample_field
from roughplane.metric import FlatMetric, GridMetricField, constant_curvature_metric


@pytest.fixture(scope="session")
def model01():
    return CovarianceModel(0.1)


@pytest.fixture(scope="session")
def grid128():
    return GridSpec(4.0, 128)


@pytest.fixture(scope="session")
def random_field(model01, grid128):
    """One fixed realization shared by read-only tests."""
    return GridMetricField.from_sample(sample_field(model01, grid128, 2024))


@pytest.fixture(scope="session")
def mild_field():
    """Low-amplitude realization used where admissibility gates apply."""
    return GridMetricField.from_sample(
        sample_field(CovarianceModel(0.0003), GridSpec(4.0, 192), 31)
    )


@pytest.fixture(scope="session")
def flat():
    return FlatMetric()


@pytest.fixture(scope="session")
def sphere():
    return constant_curvature_metric(1.0)
