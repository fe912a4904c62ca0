import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# acceptance verdicts, filled by tests/test_acceptance.py
VERDICTS = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS, key=lambda k: int(k[1:])):
        ok, detail = VERDICTS[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
