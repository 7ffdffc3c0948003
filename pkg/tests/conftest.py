import pytest

_acceptance = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        detail = "; ".join(getattr(item, "criterion_parts", []))
        _acceptance.append((item.name, "PASS" if rep.passed else "FAIL", detail))


@pytest.fixture
def detail(request):
    """Tests append one-line evidence; it is echoed in the acceptance summary."""
    parts = []
    request.node.criterion_parts = parts
    return parts


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, text in _acceptance:
        terminalreporter.write_line(f"{status}  {name}  {text}")
