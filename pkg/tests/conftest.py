import pytest

ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
