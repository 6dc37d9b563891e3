import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_bc(rng, n):
    x = rng.dirichlet(np.ones(3), size=n)
    return x / x.sum(1, keepdims=True)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    from bgtriangle.synth import make_dataset

    root = tmp_path_factory.mktemp("tiny")
    make_dataset(root, n_train=6, n_test=2, width=32, height=32, supersample=2, n_points=400)
    return root


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
