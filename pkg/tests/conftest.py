import numpy as np
import pytest

from gantransfer.data import make_synthetic
from gantransfer.metrics import fit_embedding
from gantransfer.model_zoo import ArchitectureSpec, build_network

from helpers import CRITERIA_LINES


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_spec():
    """8x8 RGB generator small enough for exhaustive checks."""
    return ArchitectureSpec(image_size=8, n_res_blocks=1, base_width=8, noise_dim=16)


@pytest.fixture
def tiny_pair(tiny_spec):
    return build_network(tiny_spec, 0), build_network(tiny_spec.replace(role="discriminator"), 0)


@pytest.fixture(scope="session")
def shapes_small():
    return make_synthetic("shapes_a", 200, 8, 0)


@pytest.fixture(scope="session")
def small_embedder():
    """A quickly trained embedding net shared by metric tests."""
    from gantransfer.data import concat

    mix = concat([make_synthetic(k, 300, 8, 11) for k in ("shapes_a", "faces_toy")], "mix")
    return fit_embedding(mix, 0, embed_dim=16, iterations=150)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
