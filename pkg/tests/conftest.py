import warnings

import pytest

from ecram_twin.core import MaterialSet, PulseProgram, geometry_a
from ecram_twin.device_sim import DeviceSimulator, SolverSettings

T150 = 423.15


def potentiation_train(n=10, amplitude=0.5, on=20e-3, off=20e-3):
    return PulseProgram.trains([(n, -abs(amplitude), on, off)])


def simulate(program, c0=0.1, resolution=6, geometry=None, **settings):
    sim = DeviceSimulator(geometry or geometry_a(), MaterialSet(), T150,
                          SolverSettings(resolution=resolution, **settings))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        trace = sim.run(program, c0)
    return sim, trace


@pytest.fixture(scope="session")
def base_run():
    """Geometry A, 150 C, ten -0.5 V pulses of 20 ms on / 20 ms off from c_v = 0.1."""
    return simulate(potentiation_train(), 0.1)


@pytest.fixture(scope="session")
def low_c_run():
    return simulate(potentiation_train(), 0.05)


@pytest.fixture(scope="session")
def fine_run():
    return simulate(potentiation_train(), 0.1, resolution=12)
