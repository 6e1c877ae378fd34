import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import pytest

from finslergrav.fields import clear_eval_cache


@pytest.fixture(autouse=True)
def _fresh_eval_cache():
    clear_eval_cache()
    yield
