import json
import pathlib

import numpy as np
import pytest

ORACLES = json.loads((pathlib.Path(__file__).parent / "oracles" / "values.json").read_text())

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    # numbered criteria first, then named extras such as the total runtime
    for key in sorted(ACCEPTANCE, key=lambda k: (isinstance(k, str), str(k).zfill(3))):
        ok, detail = ACCEPTANCE[key]
        label = f"criterion {key:>2}" if isinstance(key, int) else f"{key:<12}"
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
