"""Scoring alarms and day scores against clinical event dates.

A day counts as positive when an event happens on it or within the
following ``window - 1`` days; windows only look backward from the event.
"""

import csv
import enum
from dataclasses import dataclass, field
from datetime import date

import numpy as np
from scipy.stats import rankdata

from .exceptions import UndefinedROC

DAYS_PER_MONTH = 30.4375


class EventType(enum.Enum):
    SUICIDE_ATTEMPT = "SuicideAttempt"
    URGENCY_INTERVENTION = "UrgencyIntervention"


@dataclass(frozen=True)
class ClinicalEvent:
    patient_id: str
    date: date
    kind: EventType = EventType.URGENCY_INTERVENTION


def _ordinals(days):
    return np.array([d.toordinal() if hasattr(d, "toordinal") else int(d)
                     for d in days], dtype=np.int64)


def label_days(dates, event_dates, window=7):
    """True for every day at most ``window - 1`` days before (or on) an event."""
    if window < 1:
        raise ValueError("window must be >= 1")
    t = _ordinals(dates)
    labels = np.zeros(len(t), dtype=bool)
    for e in _ordinals(event_dates):
        lag = e - t
        labels |= (lag >= 0) & (lag <= window - 1)
    return labels


def out_of_range(dates, event_dates):
    """Events that fall outside the monitored date range."""
    t = _ordinals(dates)
    if not len(t):
        return list(event_dates)
    return [e for e, o in zip(event_dates, _ordinals(event_dates))
            if o < t.min() or o > t.max()]


@dataclass
class MatchResult:
    true_positives: int
    false_positives: int
    detected: list
    missed: list


def match_alarms(alarm_dates, event_dates, window=7):
    """Classify alarms as TP/FP and events as detected/missed.

    An alarm sitting in two overlapping windows detects both events.
    """
    a = _ordinals(alarm_dates)
    e = _ordinals(event_dates)
    lag = e[None, :] - a[:, None] if len(a) and len(e) else np.zeros((len(a), len(e)))
    hit = (lag >= 0) & (lag <= window - 1)
    tp = int(hit.any(axis=1).sum())
    found = hit.any(axis=0)
    events = list(event_dates)
    return MatchResult(tp, len(a) - tp,
                       [ev for ev, f in zip(events, found) if f],
                       [ev for ev, f in zip(events, found) if not f])


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    if labels.all() or not labels.any():
        raise UndefinedROC("ROC needs both positive and negative labels")
    return scores, labels


def roc_curve(scores, labels):
    """(FPR, TPR) arrays from (0, 0) to (1, 1), one point per distinct score."""
    scores, labels = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tps = np.cumsum(y)[last_of_group]
    fps = np.cumsum(~y)[last_of_group]
    fpr = np.r_[0.0, fps / (~y).sum()]
    tpr = np.r_[0.0, tps / y.sum()]
    return fpr, tpr


def auroc(scores, labels):
    """Mann-Whitney AUC with mid-ranks for ties."""
    scores, labels = _check_binary(scores, labels)
    ranks = rankdata(scores)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def trapezoid_auc(fpr, tpr):
    return float(np.trapezoid(tpr, fpr))


@dataclass
class PatientEval:
    patient_id: str
    n_days: int
    n_alarms: int
    true_positives: int
    false_positives: int
    detected_events: int
    missed_events: int
    auroc: float = None
    out_of_range_events: list = field(default_factory=list)

    @property
    def sensitivity(self):
        n = self.detected_events + self.missed_events
        return self.detected_events / n if n else None

    @property
    def false_alarms_per_month(self):
        return self.false_positives / (self.n_days / DAYS_PER_MONTH) if self.n_days else None


@dataclass
class EvalReport:
    window: int
    score: str
    patients: list
    roc_fpr: np.ndarray = None
    roc_tpr: np.ndarray = None
    auroc: float = None

    def pooled(self):
        def total(name):
            return sum(getattr(p, name) for p in self.patients)
        n_events = total("detected_events") + total("missed_events")
        n_days = total("n_days")
        return {
            "patients": len(self.patients),
            "days": n_days,
            "alarms": total("n_alarms"),
            "true_positives": total("true_positives"),
            "false_positives": total("false_positives"),
            "detected_events": total("detected_events"),
            "missed_events": total("missed_events"),
            "sensitivity": total("detected_events") / n_events if n_events else None,
            "false_alarms_per_patient_month": (
                total("false_positives") / (n_days / DAYS_PER_MONTH) / len(self.patients)
                if n_days else None),
            "auroc": self.auroc,
        }

    def as_dict(self, config=None):
        out = {
            "window": self.window,
            "score": self.score,
            "pooled": self.pooled(),
            "roc": None if self.roc_fpr is None else
            [[float(f), float(t)] for f, t in zip(self.roc_fpr, self.roc_tpr)],
            "patients": [{
                "patient_id": p.patient_id,
                "days": p.n_days,
                "alarms": p.n_alarms,
                "true_positives": p.true_positives,
                "false_positives": p.false_positives,
                "detected_events": p.detected_events,
                "missed_events": p.missed_events,
                "sensitivity": p.sensitivity,
                "false_alarms_per_month": p.false_alarms_per_month,
                "auroc": p.auroc,
                "out_of_range_events": [str(e) for e in p.out_of_range_events],
            } for p in self.patients],
        }
        if config is not None:
            out["config"] = config
        return out


def evaluate(traces, alarms, events, window=7, score="recent"):
    """Per-patient and pooled evaluation.

    Parameters
    ----------
    traces : dict
        ``{patient_id: RunLengthTrace}``.
    alarms : dict
        ``{patient_id: [Alarm, ...]}``.
    events : list of ClinicalEvent
    score : {"recent", "change"}
        Which trace column ranks days for the ROC.
    """
    by_patient = {}
    for ev in events:
        by_patient.setdefault(ev.patient_id, []).append(ev.date)
    patients, pooled_s, pooled_y = [], [], []
    for pid in sorted(traces):
        tr = traces[pid]
        ev_dates = sorted(by_patient.get(pid, []))
        outside = out_of_range(tr.dates, ev_dates)
        labels = label_days(tr.dates, ev_dates, window)
        s = tr.p_recent if score == "recent" else tr.p_change
        m = match_alarms([a.date for a in alarms.get(pid, [])], ev_dates, window)
        try:
            pa = auroc(s, labels)
        except UndefinedROC:
            pa = None
        patients.append(PatientEval(pid, len(tr.dates), len(alarms.get(pid, [])),
                                    m.true_positives, m.false_positives,
                                    len(m.detected), len(m.missed), pa, outside))
        pooled_s.append(s)
        pooled_y.append(labels)
    report = EvalReport(window, score, patients)
    if patients:
        s, y = np.concatenate(pooled_s), np.concatenate(pooled_y)
        try:
            report.roc_fpr, report.roc_tpr = roc_curve(s, y)
            report.auroc = auroc(s, y)
        except UndefinedROC:
            pass
    return report


EVENT_FIELDS = ("patient_id", "date", "kind")


def write_events(events, stream):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(EVENT_FIELDS)
    for ev in sorted(events, key=lambda e: (e.patient_id, e.date)):
        writer.writerow([ev.patient_id, ev.date.isoformat(), ev.kind.value])


def read_events(stream):
    return [ClinicalEvent(row["patient_id"], date.fromisoformat(row["date"]),
                          EventType(row["kind"]))
            for row in csv.DictReader(stream)]
