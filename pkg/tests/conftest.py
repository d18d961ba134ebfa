import os
import re
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = {}
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)(\w*)")


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        key = int(m.group(1))
        ok = report.outcome == "passed"
        name = report.nodeid.split("::")[-1]
        _CRITERIA.setdefault(key, []).append((name, ok))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        parts = _CRITERIA[key]
        ok = all(p for _, p in parts)
        failed = [n for n, p in parts if not p]
        detail = "" if ok else "  (failing: " + ", ".join(failed) + ")"
        tr.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}{detail}")
