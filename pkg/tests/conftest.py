import pytest

from ufqsh.hedge import logsquare_hedge, power_hedge


@pytest.fixture(scope="session")
def cubic():
    return power_hedge(3.0)


@pytest.fixture(scope="session")
def logsq():
    return logsquare_hedge()


BUILTIN = [("power2.5", lambda: power_hedge(2.5)), ("cubic", lambda: power_hedge(3.0)),
           ("logsquare", logsquare_hedge)]


@pytest.fixture(params=[b[1] for b in BUILTIN], ids=[b[0] for b in BUILTIN], scope="session")
def hedge(request):
    return request.param()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
