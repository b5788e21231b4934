import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # echo the acceptance verdicts even though per-test stdout is captured
    mod = (sys.modules.get("test_acceptance")
           or sys.modules.get("tests.test_acceptance"))
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
