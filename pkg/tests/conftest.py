import pytest

# criterion id -> (description, outcome, detail)
_ACCEPTANCE: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, text): acceptance criterion covered by a test")


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the acceptance summary line."""
    marker = request.node.get_closest_marker("criterion")
    notes = []

    def add(text):
        notes.append(str(text))
        if marker is not None:
            _ACCEPTANCE.setdefault(marker.args[0], [marker.args[1], None, ""])[2] = "; ".join(notes)

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _ACCEPTANCE.setdefault(marker.args[0], [marker.args[1], None, ""])
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry[1] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE, key=lambda c: int(c[2:])):
        text, outcome, note = _ACCEPTANCE[cid]
        line = f"{cid:<5} {outcome or 'NOT RUN':<5} {text}"
        if note:
            line += f"  [{note}]"
        terminalreporter.write_line(line)
