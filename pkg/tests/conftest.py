from datetime import date, datetime, timezone

import numpy as np
import pytest

from behaviorshift.features import EventKind, RawEvent

DAY = date(2021, 3, 1)


def at(day, hour=0, minute=0, second=0):
    return datetime(day.year, day.month, day.day, hour, minute, second,
                    tzinfo=timezone.utc)


def fix(t, lat, lon, pid="p1"):
    return RawEvent(pid, t, EventKind.LOCATION_FIX, (lat, lon))


def steps(t, n, pid="p1"):
    return RawEvent(pid, t, EventKind.STEP_COUNT, (n,))


def screen(t, seconds, pid="p1"):
    return RawEvent(pid, t, EventKind.SCREEN_USE, (float(seconds),))


def toy_matrix(rng, n_days, means, sd=0.5, rates=None, missing=0.0):
    """Days drawn from a mixture given per-component real means / binary rates."""
    means = np.atleast_2d(means)
    K = means.shape[0]
    z = rng.integers(K, size=n_days)
    real = means[z] + sd * rng.standard_normal((n_days, means.shape[1]))
    if rates is None:
        X = real
    else:
        rates = np.atleast_2d(rates)
        X = np.hstack([real, (rng.random((n_days, rates.shape[1])) < rates[z]) * 1.0])
    if missing:
        X[rng.random(X.shape) < missing] = np.nan
    return X, z


def match_means(est, truth):
    """Greedy label matching on mean distance; returns est reordered to truth."""
    order, free = [], list(range(len(est)))
    for t in truth:
        j = min(free, key=lambda i: np.linalg.norm(est[i] - t))
        order.append(j)
        free.remove(j)
    return est[order]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
