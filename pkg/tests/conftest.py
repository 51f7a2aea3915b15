import random

import hypothesis
import pytest

from ppcc import paillier
from ppcc.protocols.parties import KeyMaterial

hypothesis.settings.register_profile("default", deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")

TEST_BITS = 128


@pytest.fixture(scope="session")
def keypair():
    return paillier.keygen(TEST_BITS, random.Random(1234))


@pytest.fixture(scope="session")
def pk(keypair):
    return keypair[0]


@pytest.fixture(scope="session")
def sk(keypair):
    return keypair[1]


@pytest.fixture(scope="session")
def common_keys(keypair):
    return KeyMaterial(public=keypair[0], private=keypair[1])


@pytest.fixture(scope="session")
def threshold_5_3():
    pk, shares = paillier.threshold_keygen(TEST_BITS, 5, 3, random.Random(99))
    return KeyMaterial(public=pk, shares=tuple(shares))


@pytest.fixture
def rng():
    return random.Random(7)


def pytest_terminal_summary(terminalreporter):
    import helpers

    if helpers.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(helpers.ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
