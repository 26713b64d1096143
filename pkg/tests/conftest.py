import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_verdicts: list[str] = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _verdicts.extend(v for k, v in report.user_properties if k == "verdict")


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_verdicts, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
