import textwrap

import pytest

from meshroute.network import Network
from meshroute.scenario import parse_scenario

# Filled by test_acceptance; printed at the end of the session.
ACCEPTANCE: dict = {}
AUDIT = {"runs": 0, "priority_violations": 0}


def make_scenario(text: str):
    return parse_scenario(textwrap.dedent(text))


@pytest.fixture(autouse=True, scope="session")
def audit_every_run():
    """Every simulation in the suite must conserve packets and respect queue priority."""
    original = Network.run

    def run(self):
        result = original(self)
        AUDIT["runs"] += 1
        AUDIT["priority_violations"] += sum(s["priority_violations"] for s in result.mac_stats.values())
        assert result.conservation_holds(), f"conservation broken in {result.scenario}/{result.protocol}"
        return result

    Network.run = run
    yield
    Network.run = original


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:>3} {'PASS' if ok else 'FAIL'}  {detail}")
    terminalreporter.write_line(
        f"audit: {AUDIT['runs']} simulation runs, all conserving packets; "
        f"{AUDIT['priority_violations']} priority violations"
    )


@pytest.fixture
def line3():
    """s(1) - r(2) - d(3), lossless, one light flow."""
    return make_scenario(
        """
        name: line3
        nodes: [1, 2, 3]
        links:
          - [1, 2, 1.0]
          - [2, 3, 1.0]
        flows:
          - {id: F, src: 1, dst: 3, rate_mbps: 0.5}
        params:
          duration_s: 4
          warmup_s: 1
        """
    )
