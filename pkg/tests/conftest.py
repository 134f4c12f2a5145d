import pytest

CRITERIA = {
    1: "exact-solver run matches the dense GEVD optimum",
    2: "objective is non-increasing for every shipped solver",
    3: "residual falls below 1e-6 within 400 iterations",
    4: "inexact ensembles reach the exact-solver accuracy",
    5: "one sub-iteration per update is most efficient per sub-iteration",
    6: "solver contract certification and negative control",
    7: "power method equals projected gradient on the scaled quadratic",
    8: "rate bound holds on certified runs",
    9: "algebraic identities hold every iteration",
    10: "compressed LICQ at converged points and over-constrained case",
}

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        ok = report.passed if report.when == "call" else not (report.failed or report.skipped)
        _outcomes.setdefault(marker, []).append(ok)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n not in _outcomes:
            continue
        status = "PASS" if all(_outcomes[n]) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {CRITERIA[n]}")
