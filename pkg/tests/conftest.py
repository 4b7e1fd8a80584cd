_CRITERIA = {
    "test_criterion_1_replay_amplification_arithmetic": "1 replay amplification arithmetic",
    "test_criterion_2_security_bound_over_grid": "2 security bound (defense policies, full grid)",
    "test_criterion_3_golden_walkthrough": "3 six-step golden walkthrough",
    "test_criterion_4_no_false_negatives": "4 no false negatives (100k+ pairs)",
    "test_criterion_5_decision_dominance": "5 decision dominance",
    "test_criterion_6_forward_progress": "6 forward progress",
    "test_criterion_7_performance_proxies": "7 performance proxies",
    "test_criterion_8_context_isolation": "8 context isolation",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    seen = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            name = rep.nodeid.split("::")[-1]
            if name in _CRITERIA:
                seen[_CRITERIA[name]] = status
    if seen:
        terminalreporter.write_sep("-", "acceptance criteria")
        for label in sorted(seen, key=lambda s: s.split()[0]):
            status = seen[label]
            word = "PASS" if status == "passed" else "FAIL"
            terminalreporter.write_line(f"criterion {label}: {word}")
