def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number, label, status, elapsed in sorted(RESULTS):
        terminalreporter.write_line(
            f"criterion {number}: {status} ({elapsed:.2f}s) {label}"
        )
