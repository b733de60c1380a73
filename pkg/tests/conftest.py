import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {}


def record(number: int, ok: bool, detail: str = "") -> None:
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])
