"""Release gate: the nine acceptance checks, one test each.

Each test prints the one-line verdict for its criterion; the whole
module is expected to finish well under a minute.
"""

import time

import pytest

from pandi import accept

_STARTED = time.monotonic()


@pytest.mark.parametrize(
    "criterion", accept.CRITERIA,
    ids=[f"criterion_{fn.__name__.split('_')[1]}" for fn in accept.CRITERIA])
def test_criterion(criterion):
    check = criterion()
    print(check.line())
    assert check.passed, check.line()


def test_suite_stays_under_a_minute():
    assert time.monotonic() - _STARTED < 60.0
