def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one line per acceptance criterion at the end of a run."""
    entries = {}
    for status in ("passed", "failed", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = str(getattr(report, "nodeid", ""))
            if "test_acceptance.py" not in nodeid:
                continue
            if status != "skipped" and getattr(report, "when", "call") != "call":
                continue
            entries[nodeid] = status
    if not entries:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for nodeid in sorted(entries):
        name = nodeid.split("::")[-1]
        status = entries[nodeid]
        terminalreporter.write_line(f"{status.upper():8s} {name}")
