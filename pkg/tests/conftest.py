import warnings

import numpy as np
import pytest

from diffvar.dataset import Dataset


@pytest.fixture(autouse=True)
def _quiet_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_data(rng, n=200, p=2, hetero=1.0):
    w = rng.normal(size=(n, p))
    a = rng.binomial(1, 1 / (1 + np.exp(-0.5 * w[:, 0])))
    y = 1.0 + w[:, 0] + a * (1.0 + hetero * w[:, 1]) + rng.normal(size=n)
    return Dataset(w, a, y)


@pytest.fixture
def small_data(rng):
    return make_data(rng)


ACCEPTANCE = {}


def record(criterion, ok, detail):
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[c]
        terminalreporter.write_line(f"criterion {c}: {'PASS' if ok else 'FAIL'} | {detail}")
