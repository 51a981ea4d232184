def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, plus any recorded detail."""
    rows = {}
    for outcome in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", ""):
                continue
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" not in props:
                continue
            key = props["criterion"]
            verdict = "PASS" if outcome == "passed" else "FAIL"
            if rep.when != "call" and outcome == "passed":
                continue
            prev = rows.get(key)
            if prev is None or verdict == "FAIL":
                rows[key] = (verdict, props.get("title", ""), props.get("detail", ""))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(rows, key=int):
        verdict, title, detail = rows[key]
        line = f"[{verdict}] criterion {key}: {title}"
        terminalreporter.write_line(line + (f" | {detail}" if detail else ""))
