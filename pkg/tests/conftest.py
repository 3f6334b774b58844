from __future__ import annotations

import pytest

from _models import snooping_model as _snooping


@pytest.fixture
def snooping_model():
    return _snooping()
