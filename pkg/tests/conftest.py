import pytest

ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = item.get_closest_marker("criterion")
    if crit is None or rep.when != "call":
        return
    n = crit.args[0]
    if hasattr(rep, "wasxfail"):
        status = "FAIL (expected)"
    else:
        status = "PASS" if rep.passed else "FAIL"
    ACCEPTANCE[n] = (status, item.name)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, name = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status:<15} {name}")
