import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def central_difference(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def max_rel_error(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(floor, np.abs(a) + np.abs(b))))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance summary: one line per criterion ------------------------------

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    entry = _criteria.setdefault(crit[0], {"title": crit[1], "outcomes": []})
    if report.when == "call" or report.outcome != "passed":
        entry["outcomes"].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        outs = _criteria[n]["outcomes"]
        if any(o == "failed" for o in outs):
            status = "FAIL"
        elif outs and all(o == "skipped" for o in outs):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {n}: {status}  {_criteria[n]['title']}")
