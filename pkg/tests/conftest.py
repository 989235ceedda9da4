import pytest

from galmix.noise import make_noise_spec
from galmix.rng import RngStream
from galmix.spectral import build_shell_model, build_torus_model


@pytest.fixture(scope="session")
def torus2():
    return build_torus_model(2)


@pytest.fixture(scope="session")
def torus1():
    return build_torus_model(1)


@pytest.fixture(scope="session")
def shell5():
    return build_shell_model(5, 0.3)


@pytest.fixture(scope="session")
def shell5_noise(shell5):
    return make_noise_spec(shell5, "constant_diagonal", s=2.75)


@pytest.fixture()
def stream():
    return RngStream(20240901)


@pytest.fixture(scope="session")
def accept_model():
    """The documented calibration configuration's model."""
    return build_shell_model(5, 0.05, mu1=16.0,
                             f={"amplitude": 0.01, "modes": [0]})


@pytest.fixture(scope="session")
def accept_noise(accept_model):
    return make_noise_spec(accept_model, "constant_diagonal", s=2.75)
