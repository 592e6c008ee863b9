import pytest

# criterion number -> (title, passed, detail)
_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.fixture
def detail(request):
    """Dict a criterion test fills with the numbers worth reporting."""
    store = {}
    request.node._acceptance_detail = store
    return store


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    info = getattr(item, "_acceptance_detail", {})
    text = ", ".join(f"{k}={v}" for k, v in info.items())
    if report.failed and call.excinfo is not None:
        text = (text + "; " if text else "") + call.excinfo.exconly().splitlines()[0][:200]
    _ACCEPTANCE[number] = (title, report.passed, text)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, text = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {text}")
