import pytest

from smmusim.iommu import IommuRegistry
from smmusim.phys_mem import PhysMemory
from smmusim.scenario import DATA_DIR
from smmusim.smmu import Smmu

DTS_DIR = DATA_DIR / "dts"
SCN_DIR = DATA_DIR / "scenarios"

_acceptance = []


@pytest.fixture
def mem():
    return PhysMemory()


@pytest.fixture
def trace():
    return []


@pytest.fixture
def smmu(trace):
    return Smmu(trace=trace.append)


@pytest.fixture
def iommu(smmu, mem):
    return IommuRegistry(smmu, mem)


@pytest.fixture
def dts_text():
    def read(name):
        return (DTS_DIR / name).read_text(encoding="utf-8")
    return read


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _acceptance.append((marker.args[0], marker.args[1], rep.passed))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, passed in sorted(_acceptance):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {num}: {title}")
