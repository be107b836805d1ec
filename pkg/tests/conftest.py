import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    number, title = mark.args
    prev = _CRITERIA.get(number, (title, True, ""))
    ok = prev[1] and not rep.failed
    reason = prev[2]
    if rep.failed and not reason:
        reason = str(rep.longrepr.reprcrash.message).splitlines()[0] if hasattr(
            rep.longrepr, "reprcrash") else "failed"
    _CRITERIA[number] = (title, ok, reason)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, reason = _CRITERIA[number]
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}"
        if not ok:
            line += f" ({reason[:120]})"
        terminalreporter.write_line(line)
