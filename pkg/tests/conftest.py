import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance criteria status lines after the test table."""
    for name in ("test_acceptance", "tests.test_acceptance"):
        mod = sys.modules.get(name)
        if mod is not None and getattr(mod, "STATUS_LINES", None):
            terminalreporter.section("acceptance criteria")
            for line in mod.STATUS_LINES:
                terminalreporter.write_line(line)
            break
