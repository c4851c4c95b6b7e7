import math

import numpy as np
import pytest
from hypothesis import settings

from pmusim import SignalSpec, synthesize

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

_CRITERIA: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for n in getattr(report, "criteria", ()):
        _CRITERIA.setdefault(n, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    rep.criteria = tuple(m.args[0] for m in item.iter_markers("criterion"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcomes = _CRITERIA[n]
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(
            f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} ({len(outcomes)} checks)")


@pytest.fixture
def cosine():
    """Factory for synthetic streams with the usual 50 Hz / 10 kHz defaults."""
    def make(rms=230.0, f=50.0, phase=0.0, duration=1.0, fs=10_000.0, f0=50.0, tones=()):
        return synthesize(SignalSpec(rms, f, phase, f0, fs, duration, tuple(tones)))
    return make


def angle_diff_deg(a_deg, b_deg):
    """Smallest signed difference between two angles, degrees."""
    return (np.asarray(a_deg) - b_deg + 180.0) % 360.0 - 180.0


def close_rel(a, b, rel):
    return abs(a - b) <= rel * max(abs(a), abs(b), math.ulp(1.0))
