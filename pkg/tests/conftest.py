from __future__ import annotations

import re

_ACCEPT_RE = re.compile(r"test_c(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion, visible in the run log."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    m = _ACCEPT_RE.search(report.nodeid)
    if not m:
        return
    label = m.group(2).replace("_", " ")
    outcome = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    print(f"\n[acceptance] criterion {int(m.group(1)):2d} ({label}): {outcome}",
          flush=True)
