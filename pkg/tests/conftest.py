import numpy as np
import pytest

from pemiu_toolkit.data import REFERENCE_SPEC, generate


@pytest.fixture(scope="session")
def reference_dataset():
    """S=512, 500 identities x 2 samples, intra_sigma 0.1, seed 7."""
    return generate(REFERENCE_SPEC)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in rep.nodeid or rep.when != "call" and outcome != "error":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                status = "PASS" if outcome == "passed" else "FAIL"
                lines.append((props["criterion"], f"criterion {props['criterion']:>2} {status}  "
                                                  f"{props.get('title', '')}  {props.get('detail', '')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)
