import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_acceptance_lines = []


def record_acceptance(line: str) -> None:
    """Keep a criterion's verdict for the end-of-run summary and echo it now."""
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
