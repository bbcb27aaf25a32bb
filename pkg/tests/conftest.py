import numpy as np
import pytest

from posthoc_ens.core import PredictionSet, renormalize_rows

ACCEPTANCE_RESULTS = {}


def random_pred_set(rng, m, n, c, ensure_classes=True):
    probs = rng.dirichlet(np.ones(c), size=(m, n))
    labels = rng.integers(c, size=n)
    if ensure_classes:
        labels[:c] = np.arange(c)
        rng.shuffle(labels)
    return PredictionSet(renormalize_rows(probs), labels, tuple(f"m{b}" for b in range(m)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        prev = ACCEPTANCE_RESULTS.get(number, (title, "PASS"))[1]
        status = "PASS" if report.outcome == "passed" and prev == "PASS" else "FAIL"
        ACCEPTANCE_RESULTS[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, status = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[{status}] {number:2d}. {title}")
