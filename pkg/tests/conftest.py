import pytest

from asym_mdi.config import default_config
from asym_mdi.scenario import build_scenario, build_spectra

_REPORT_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def report(request):
    """Record one PASS/FAIL line; printed now and repeated in the terminal summary."""
    lines = request.config.stash[_REPORT_KEY]

    def record(criterion: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return record


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def spectra(cfg):
    return build_spectra(cfg)


@pytest.fixture(scope="session")
def scenario(cfg, spectra):
    return build_scenario(cfg, spectra)
