import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wdiscood.stats import LabeledFeatures  # noqa: E402


def gaussian_classes(seed, c=10, d=50, n_per_class=200, spread=3.0, noise=None):
    """Gaussian classes with a random (anisotropic) shared covariance."""
    rng = np.random.default_rng(seed)
    means = spread * rng.standard_normal((c, d))
    if noise is None:
        noise = rng.standard_normal((d, d)) / np.sqrt(d) + np.eye(d)
    labels = np.repeat(np.arange(c), n_per_class)
    x = means[labels] + rng.standard_normal((labels.size, d)) @ noise
    return LabeledFeatures(x, labels, c)


@pytest.fixture
def make_classes():
    return gaussian_classes


_CRITERIA: dict[str, tuple[str, str]] = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of an acceptance criterion for the terminal summary."""

    def record(label):
        _CRITERIA[request.node.nodeid] = (label, "PENDING")
        return label

    yield record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.nodeid in _CRITERIA and report.when == "call":
        label, _ = _CRITERIA[item.nodeid]
        _CRITERIA[item.nodeid] = (label, "SKIP" if report.skipped else
                                  "PASS" if report.passed else "FAIL")
    elif item.nodeid in _CRITERIA and report.when == "setup" and report.skipped:
        label, _ = _CRITERIA[item.nodeid]
        _CRITERIA[item.nodeid] = (label, "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in sorted(_CRITERIA.values(), key=lambda t: int(t[0].split()[0])):
        terminalreporter.write_line(f"[{status}] criterion {label}")
