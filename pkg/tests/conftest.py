import numpy as np
import pytest

from udset.config import RunConfig
from udset.tubes import build


@pytest.fixture(scope="session")
def cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def con(cfg):
    return build(cfg)


@pytest.fixture(scope="session")
def con_k2(cfg):
    from dataclasses import replace
    return build(replace(cfg, tubes=replace(cfg.tubes, K=2)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


@pytest.fixture
def record():
    """Log one acceptance line; the lines are printed together at the end of the run."""
    def _record(n, ok, detail=""):
        ACCEPTANCE.append((n, bool(ok), detail))
        return bool(ok)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
