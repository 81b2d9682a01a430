import pytest

from mcbounds import verify


@pytest.fixture(scope="session")
def full_suite():
    """The 20-chain certified random suite shared by the acceptance checks."""
    return verify.build_suite()
