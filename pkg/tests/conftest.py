import numpy as np
import pytest

from hesslab.config import Config, QConfig
from hesslab.cycles import DrivingCycle, bundled_cycle
from hesslab.harness import calibrate_reward


@pytest.fixture(scope="session")
def config():
    return Config()


@pytest.fixture(scope="session")
def small_config():
    """10 x 10 action grid: the desk-scale Q-learning setup."""
    return Config(qlearning=QConfig(n_dischg=10, n_chg=10, episodes=300))


@pytest.fixture(scope="session")
def udds():
    return bundled_cycle("udds_like")


@pytest.fixture(scope="session")
def wltp():
    return bundled_cycle("wltp_like")


@pytest.fixture(scope="session")
def reward(config):
    return calibrate_reward(config)


@pytest.fixture
def zero_cycle():
    return DrivingCycle("zero", 1.0, np.zeros(120))


VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


@pytest.fixture(scope="session")
def verdicts(pytestconfig):
    """Collects one PASS/FAIL line per acceptance criterion."""
    return pytestconfig.stash[VERDICTS]


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[VERDICTS]
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
