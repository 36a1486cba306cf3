import numpy as np
import pytest

from mmsense.echo import OfdmParams


@pytest.fixture
def small_params():
    # 32 subcarriers x 16 symbols, generous CP so long test delays stay valid
    return OfdmParams(num_subcarriers=32, scs=30e3, num_symbols=16, carrier_freq=3.5e9, cp_duration=10e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
