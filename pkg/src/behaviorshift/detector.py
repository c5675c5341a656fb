"""Behaviour-shift alarms from the MAP run-length sequence.

An alarm fires on day t when the MAP run length has collapsed to (nearly)
zero after having been long: ``r*[t] <= epsilon`` and
``r*[t-1] - r*[t] >= min_drop``, at most once per refractory period.
"""

import csv
from dataclasses import dataclass
from datetime import date

import numpy as np
from sklearn.base import BaseEstimator


@dataclass(frozen=True)
class DetectorConfig:
    epsilon: int = 1
    min_drop: int = 5
    refractory: int = 3

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.min_drop < 1:
            raise ValueError("min_drop must be >= 1")
        if self.refractory < 0:
            raise ValueError("refractory must be >= 0")


@dataclass(frozen=True)
class Alarm:
    date: object
    drop: int
    r_star: int
    score: float


def alarm_mask(r_star, epsilon=1, min_drop=5, refractory=3):
    """Boolean per-day alarm indicator for a MAP run-length sequence."""
    r = np.asarray(r_star, dtype=np.int64)
    fired = np.zeros(len(r), dtype=bool)
    last = None
    for t in range(1, len(r)):
        if r[t] <= epsilon and r[t - 1] - r[t] >= min_drop:
            if last is None or t - last > refractory:
                fired[t] = True
                last = t
    return fired


def detect(trace, cfg=None):
    """Alarms for a :class:`~behaviorshift.changepoint.RunLengthTrace`."""
    cfg = cfg or DetectorConfig()
    fired = alarm_mask(trace.r_star, cfg.epsilon, cfg.min_drop, cfg.refractory)
    return [Alarm(trace.dates[t], int(trace.r_star[t - 1] - trace.r_star[t]),
                  int(trace.r_star[t]), float(trace.p_change[t]))
            for t in np.flatnonzero(fired)]


def score_series(trace, kind="change"):
    """Per-day scores: ``change`` is p(r_t = 0), ``recent`` is p(r_t < window)."""
    if kind == "change":
        values = trace.p_change
    elif kind == "recent":
        values = trace.p_recent
    else:
        raise ValueError(f"unknown score kind {kind!r}")
    return list(zip(trace.dates, values.tolist()))


class ShiftDetector(BaseEstimator):
    """Estimator wrapper: ``predict`` maps MAP run lengths to alarm flags."""

    def __init__(self, epsilon=1, min_drop=5, refractory=3):
        self.epsilon = epsilon
        self.min_drop = min_drop
        self.refractory = refractory

    def fit(self, r_star=None, y=None):
        DetectorConfig(self.epsilon, self.min_drop, self.refractory)
        return self

    def predict(self, r_star):
        return alarm_mask(np.ravel(r_star), self.epsilon, self.min_drop,
                          self.refractory)


ALARM_FIELDS = ("patient_id", "date", "drop", "r_star", "score")


def write_alarms(alarms_by_patient, stream):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(ALARM_FIELDS)
    for pid in sorted(alarms_by_patient):
        for a in alarms_by_patient[pid]:
            writer.writerow([pid, str(a.date), a.drop, a.r_star, repr(float(a.score))])


def read_alarms(stream):
    out = {}
    for row in csv.DictReader(stream):
        out.setdefault(row["patient_id"], []).append(
            Alarm(date.fromisoformat(row["date"]), int(row["drop"]),
                  int(row["r_star"]), float(row["score"])))
    return out
