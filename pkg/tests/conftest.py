import pytest

# criterion number -> (passed, title, detail)
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): one numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    n, title = mark.args
    if rep.failed and (n not in ACCEPTANCE or ACCEPTANCE[n][0]):
        msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
        ACCEPTANCE[n] = (False, title, msg)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d} {title}: {detail}")


@pytest.fixture
def criterion(request):
    """``check(ok, detail)`` records the criterion's line, prints it, then asserts ``ok``."""
    n, title = request.node.get_closest_marker("acceptance").args

    def check(ok, detail=""):
        ACCEPTANCE[n] = (bool(ok), title, detail)
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d} {title}: {detail}")
        assert ok, f"criterion {n} ({title}): {detail}"
    return check
