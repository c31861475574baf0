import logging

import pytest
from hypothesis import settings

settings.register_profile('mveval', max_examples=100, deadline=None)
settings.register_profile('quick', max_examples=20, deadline=None)
settings.load_profile('mveval')


@pytest.fixture(autouse=True)
def _quiet_logger():
    logging.getLogger('mveval').setLevel(logging.WARNING)
    yield
