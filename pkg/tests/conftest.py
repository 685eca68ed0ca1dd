"""Shared pytest wiring: per-criterion summary for the acceptance suite.

Every ``test_cNN_*`` test in test_acceptance.py maps to one numbered
criterion; after the run a one-line PASS/FAIL verdict is printed for each,
with the measured margin recorded by the test body where available.
"""

import re

import pytest

CRITERIA_TITLES = {
    1: "sequential round trip reproduces subset policies (200 tables)",
    2: "lifted value matches direct value on 50 random processes",
    3: "best sequential policy attains the optimal subset-policy value",
    4: "hand-evaluated inverse of the uniform two-target policy",
    5: "intersection area vs circular lens and rejection sampling",
    6: "actor/critic analytic gradients vs central differences",
    7: "evolution strategy solves the 9-D sphere for 10/10 seeds",
    8: "trained preference weights beat greedy on the overlap scenario",
    9: "trained communication variant beats greedy on stacked radars",
    10: "policy-gradient learning trend and final-policy comparison",
    11: "simulation invariants over ten thousand randomized trials",
}

_outcomes = {}
_details = {}


def record_criterion(number: int, detail: str):
    """Called by acceptance tests to attach measured margins to the report."""
    _details[number] = detail


def _criterion_number(item) -> int | None:
    if "test_acceptance" not in str(getattr(item, "fspath", "")):
        return None
    match = re.search(r"test_c(\d{2})_", item.name)
    return int(match.group(1)) if match else None


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    number = _criterion_number(item)
    if number is None:
        return
    if report.when == "call":
        _outcomes[number] = report.outcome
    elif report.outcome != "passed" and number not in _outcomes:
        _outcomes[number] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        outcome = _outcomes[number]
        status = {"passed": "PASS", "skipped": "SKIP"}.get(outcome, "FAIL")
        line = f"criterion {number:2d} {status}  {CRITERIA_TITLES[number]}"
        if number in _details:
            line += f"  [{_details[number]}]"
        terminalreporter.write_line(line)
