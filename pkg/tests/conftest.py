import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not any(isinstance(k, int) for k in ACCEPTANCE_RESULTS):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(k for k in ACCEPTANCE_RESULTS if isinstance(k, int)):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
