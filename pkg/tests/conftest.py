import numpy as np
import pytest

from spectramech.distributions import (
    TabulatedType,
    TruncatedLinearType,
    TruncatedPowerType,
    UniformType,
)
from spectramech.fd import FdScenario, FdUser
from spectramech.rates import FdUserPhysical, GainDistribution, SsPhysical
from spectramech.ss import SsScenario


def det_user(gain=1.0, power=1.0, noise=1.0, types=None):
    physical = FdUserPhysical(
        gain=GainDistribution.deterministic(gain), power=power, noise_density=noise
    )
    return FdUser(physical=physical, types=types or UniformType(0.0, 1.0))


def two_point_user(types=None):
    gain = GainDistribution.discrete([0.5, 1.5], [0.5, 0.5])
    physical = FdUserPhysical(gain=gain, power=2.0, noise_density=1.0)
    return FdUser(physical=physical, types=types or UniformType(0.0, 1.0))


@pytest.fixture
def fd_pair():
    """Two deterministic-gain users on uniform [0, 1] types, W = 1."""
    return FdScenario(bandwidth=1.0, users=(det_user(), det_user(gain=2.0)))


@pytest.fixture
def fd_single():
    return FdScenario(bandwidth=1.0, users=(det_user(),))


@pytest.fixture
def fd_mixed():
    """Different gain laws and type families in one scenario."""
    users = (
        det_user(gain=1.5, types=TruncatedLinearType(0.0, 1.0, 3.0)),
        two_point_user(types=UniformType(0.5, 1.5)),
        det_user(gain=0.8, power=2.0, types=TruncatedPowerType(1.0, 2.0, -2.0)),
    )
    return FdScenario(bandwidth=2.0, users=users)


@pytest.fixture
def ss_pair():
    phys = SsPhysical(
        gain_matrix=np.array([[1.0, 0.2], [0.3, 0.8]]),
        bandwidth=1.0,
        noise_density=0.5,
    )
    return SsScenario(
        physical=phys,
        total_power=2.0,
        type_dists=(UniformType(0.0, 1.0), UniformType(0.0, 1.0)),
    )


@pytest.fixture
def nonregular_dist():
    """Steep-then-flat tabulated law whose virtual type dips at the knot."""
    return TabulatedType([0.0, 0.5, 1.0], [0.0, 0.9, 1.0])
