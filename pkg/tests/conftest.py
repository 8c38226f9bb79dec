import pytest

# Filled by test_acceptance.py: (criterion id, description, passed, detail)
ACCEPTANCE_LINES: list = []


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for cid, desc, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: int(r[0])):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid:>2}. {desc}: {detail}")
