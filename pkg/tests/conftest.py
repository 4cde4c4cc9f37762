import numpy as np
import pytest

from densitysteer import density as dens


@pytest.fixture
def standard_normal():
    return dens.gaussian(0.0, 1.0)


@pytest.fixture
def example1_terminal():
    return dens.mixture([("gaussian", 1.0, 1.0, 0.4), ("gaussian", -1.0, 1.0, 0.6)])


@pytest.fixture
def example2_terminal():
    return dens.mixture([("laplace", 1.0, 1.0, 0.5), ("laplace", -3.0, 1.0, 0.5)])


def random_cone_moments(rng, order=4, components=2):
    """Closed-form moments of a random Gaussian mixture; always strictly inside the cone."""
    w = rng.dirichlet(np.ones(components))
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    spec = dens.mixture([
        ("gaussian", rng.uniform(-1.5, 1.5), rng.uniform(0.4, 1.5), wi) for wi in w
    ])
    return spec, dens.closed_form_moments(spec, order)
