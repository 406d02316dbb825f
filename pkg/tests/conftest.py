import math

import numpy as np
import pytest

from hypertrack.analysis import design_controller
from hypertrack.fsfh import DesignConfig, make_weight
from hypertrack.lti import RationalTransferFunction

PI = math.pi


@pytest.fixture(scope="session")
def second_order_plant():
    return RationalTransferFunction((1.0,), (1.0, 2.0, 1.0))


@pytest.fixture(scope="session")
def example1_cfg(second_order_plant):
    return DesignConfig(plant=second_order_plant, F_r=make_weight(1.5 * PI, 0.1),
                        h=1.0, M=8, N=8, m=4)


@pytest.fixture(scope="session")
def example1_design(example1_cfg):
    """(LiftedController, HinfResult) for the 3 pi/2 tracking design."""
    return design_controller(example1_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def random_stable_continuous(rng, n, m=1, p=1):
    from hypertrack.lti import ContinuousStateSpace

    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + 0.5 + rng.random()) * np.eye(n)
    return ContinuousStateSpace(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)),
                                rng.standard_normal((p, m)))


def random_stable_discrete(rng, n, m=1, p=1, radius=0.9, period=1.0):
    from hypertrack.lti import DiscreteStateSpace

    A = rng.standard_normal((n, n))
    A *= radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
    return DiscreteStateSpace(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)),
                              rng.standard_normal((p, m)), period)
