import numpy as np
import pytest

from kposim import FockSpace, KpoNetworkParams, ProtocolSchedule


@pytest.fixture(scope="session")
def one_kpo_params():
    return KpoNetworkParams(chi=(1.0,), detuning=(1.0,), pump=(1.0,),
                            coherent_drive=(1.0,))


@pytest.fixture(scope="session")
def one_kpo_schedule():
    return ProtocolSchedule(t_ann=500.0, s1=0.5, tau_max=500.0, omega=0.0, lam=0.1)


@pytest.fixture(scope="session")
def one_kpo_space():
    return FockSpace((15,))


@pytest.fixture(scope="session")
def two_kpo_params():
    return KpoNetworkParams(chi=(1.0, 1.23), detuning=(0.1, 0.1), pump=(2.0, 2.46),
                            coherent_drive=(0.0, 0.0),
                            coupling=((0.0, 0.1), (0.1, 0.0)), gamma=0.00014)


@pytest.fixture(scope="session")
def two_kpo_schedule():
    return ProtocolSchedule(t_ann=500.0, s1=2.0 / 3.0, tau_max=8000.0, omega=0.0,
                            lam=0.02)


@pytest.fixture(scope="session")
def two_kpo_space():
    return FockSpace((12, 12))


@pytest.fixture(autouse=True)
def _deterministic_numpy():
    state = np.random.get_state()
    np.random.seed(1234)
    yield
    np.random.set_state(state)
