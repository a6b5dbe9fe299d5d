import pytest

from chainacl import scenarios
from chainacl.crypto import Provider


@pytest.fixture(scope="session")
def fixtures():
    """Trained model, keys, genesis config; built once per test session."""
    return scenarios.shared_fixtures()


@pytest.fixture()
def provider():
    return Provider(seed=7)
