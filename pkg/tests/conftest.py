import re

CRITERIA = {
    1: "gradient suite",
    2: "beta invariants",
    3: "scalar oracle equivalence",
    4: "structural reductions",
    5: "weak-to-strong without labels",
    6: "with-labels non-inferiority",
    7: "beta dynamics",
    8: "noise machinery",
    9: "few-shot protocol",
    10: "determinism and formats",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: numbered acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", getattr(report, "nodeid", ""))
            if m is None:
                continue
            n = int(m.group(1))
            if status != "passed" or report.when == "call":
                if outcomes.get(n) != "FAIL":
                    outcomes[n] = "PASS" if status == "passed" else "FAIL"
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(f"criterion {n:2d} {outcomes.get(n, 'NOT RUN'):7s} {CRITERIA[n]}")
