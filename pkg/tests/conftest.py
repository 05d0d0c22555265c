def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # Echo the acceptance-gate verdicts (normally swallowed with the rest of
    # the passing tests' stdout) as one block at the end of the run.
    lines = set()
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            for ln in (getattr(rep, "capstdout", "") or "").splitlines():
                if ln.startswith("CRITERION "):
                    lines.add(ln)
    if lines:
        terminalreporter.write_sep("=", "acceptance gate")
        for ln in sorted(lines):
            terminalreporter.write_line(ln)
