import functools

import pytest
from hypothesis import settings

from tracephase.fem import TraceSpace
from tracephase.geometry import ImplicitSurface

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def sphere_space(level):
    return TraceSpace(ImplicitSurface.sphere(), level)


@pytest.fixture(scope="session")
def sphere3():
    return sphere_space(3)


@pytest.fixture(scope="session")
def sphere4():
    return sphere_space(4)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """``verdict(n, ok, detail)`` prints one PASS/FAIL line and fails the test if not ``ok``."""
    def report(n, ok, detail):
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash.setdefault(ACCEPTANCE, []).append(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines):
            terminalreporter.write_line(line)
