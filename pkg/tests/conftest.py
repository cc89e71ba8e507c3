import os

from hypothesis import settings

settings.register_profile("pkg", deadline=None, max_examples=30, derandomize=True)
settings.load_profile("pkg")

# one line per acceptance criterion, filled in by test_acceptance.py
CRITERIA_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA_LINES):
        terminalreporter.write_line(CRITERIA_LINES[k])


def pytest_configure(config):
    os.environ.setdefault("OMP_NUM_THREADS", "1")
