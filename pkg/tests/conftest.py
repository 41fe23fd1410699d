import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nonce_lab.ff_curve import get_curve


@pytest.fixture(scope="session")
def toy():
    return get_curve("toy16")


@pytest.fixture(scope="session")
def p128():
    return get_curve("secp128r1")


@pytest.fixture(scope="session")
def p521():
    return get_curve("secp521r1")


@pytest.fixture(scope="session")
def w255():
    return get_curve("wei25519")


@pytest.fixture()
def rng():
    return random.Random(0xC0FFEE)
