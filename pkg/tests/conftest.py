import pytest

from renege import Uniform, iid_source


@pytest.fixture
def bounded_src():
    """Subcritical bounded scenario: renovation epochs are frequent."""
    return iid_source(Uniform(0.5, 1.5), Uniform(0.0, 0.8), Uniform(0.0, 0.4), seed=424242)
