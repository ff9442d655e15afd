import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_LINES: dict[int, str] = {}


def record(number: int, passed: bool, detail: str) -> None:
    """Store and print the verdict line of one acceptance criterion."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    _LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
