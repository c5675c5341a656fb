"""Raw sensing logs to daily half-hour-slot feature vectors.

A day is a 4 x 48 grid: two real blocks (log distance, log steps) and two
binary blocks (phone usage, home presence). Missing entries are NaN in
``values`` and True in ``missing``; the flattened 192-vector is the row
format consumed by :class:`behaviorshift.mixture.ProfileMixture`.
"""

import csv
import enum
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .exceptions import BadValue, DateMismatch, DuplicateDay, HomeUnresolvable

N_SLOTS = 48
SLOT_SECONDS = 1800
BLOCKS = ("log_distance", "log_steps", "phone_usage", "home_presence")
N_REAL_BLOCKS = 2
N_FEATURES = len(BLOCKS) * N_SLOTS
N_REAL = N_REAL_BLOCKS * N_SLOTS
EARTH_RADIUS_KM = 6371.0
NULL = "null"


class EventKind(enum.Enum):
    LOCATION_FIX = "LocationFix"
    STEP_COUNT = "StepCount"
    SCREEN_USE = "ScreenUse"


@dataclass(frozen=True)
class RawEvent:
    """One sensed record.

    ``payload`` is ``(latitude, longitude)`` for a location fix, ``(steps,)``
    for a step count and ``(duration_seconds,)`` for screen use.
    """

    patient_id: str
    timestamp: datetime
    kind: EventKind
    payload: tuple

    @property
    def latlon(self):
        return self.payload[0], self.payload[1]


@dataclass(frozen=True)
class LineError:
    lineno: int
    line: str
    message: str


@dataclass(frozen=True)
class HomeModel:
    center: tuple
    radius: float = 250.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("home radius must be positive")
        _check_coordinates(*self.center)

    def contains(self, latlon):
        return haversine_km(self.center, latlon) * 1000.0 <= self.radius


@dataclass(eq=False)
class DailyFeatures:
    patient_id: str
    date: date
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=np.float64).reshape(len(BLOCKS), N_SLOTS)
        self.missing = np.array(self.missing, dtype=bool).reshape(len(BLOCKS), N_SLOTS)
        self.values[self.missing] = np.nan
        observed = self.values[~self.missing]
        if not np.isfinite(observed).all():
            raise BadValue(f"{self.date}: unmasked entries must be finite")
        binary = self.values[N_REAL_BLOCKS:][~self.missing[N_REAL_BLOCKS:]]
        if not np.isin(binary, (0.0, 1.0)).all():
            raise BadValue(f"{self.date}: binary entries must be 0 or 1")

    @classmethod
    def empty(cls, patient_id, day):
        return cls(patient_id, day, np.full((len(BLOCKS), N_SLOTS), np.nan),
                   np.ones((len(BLOCKS), N_SLOTS), dtype=bool))

    @property
    def real_blocks(self):
        return self.values[:N_REAL_BLOCKS]

    @property
    def bin_blocks(self):
        return self.values[N_REAL_BLOCKS:]

    @property
    def fully_missing(self):
        return bool(self.missing.all())

    def to_vector(self):
        """Flattened 192-vector, NaN where missing."""
        return np.where(self.missing, np.nan, self.values).ravel()

    def __eq__(self, other):
        if not isinstance(other, DailyFeatures):
            return NotImplemented
        return (self.patient_id == other.patient_id and self.date == other.date
                and np.array_equal(self.missing, other.missing)
                and np.array_equal(self.values, other.values, equal_nan=True))


@dataclass(eq=False)
class PatientSeries:
    patient_id: str
    days: list = field(default_factory=list)

    def __post_init__(self):
        if not self.days:
            raise ValueError("a patient series needs at least one day")
        for prev, cur in zip(self.days, self.days[1:]):
            if cur.date - prev.date != timedelta(days=1):
                raise ValueError(f"series not gap-free between {prev.date} and {cur.date}")

    @property
    def start_date(self):
        return self.days[0].date

    @property
    def dates(self):
        return [d.date for d in self.days]

    def __len__(self):
        return len(self.days)

    def to_matrix(self):
        """(n_days, 192) float matrix with NaN for missing entries."""
        return np.vstack([d.to_vector() for d in self.days])

    @classmethod
    def from_matrix(cls, patient_id, start_date, X):
        X = np.asarray(X, dtype=np.float64)
        days = [DailyFeatures(patient_id, start_date + timedelta(days=i), row,
                              np.isnan(row))
                for i, row in enumerate(X)]
        return cls(patient_id, days)

    @classmethod
    def from_days(cls, patient_id, days):
        """Sort, reject duplicates and fill calendar gaps with empty days."""
        days = sorted(days, key=lambda d: d.date)
        filled = []
        for d in days:
            if filled and d.date == filled[-1].date:
                raise DuplicateDay(f"{patient_id}: duplicate day {d.date}")
            while filled and filled[-1].date + timedelta(days=1) < d.date:
                filled.append(DailyFeatures.empty(patient_id,
                                                  filled[-1].date + timedelta(days=1)))
            filled.append(d)
        return cls(patient_id, filled)

    def __eq__(self, other):
        if not isinstance(other, PatientSeries):
            return NotImplemented
        return self.patient_id == other.patient_id and self.days == other.days


def _check_coordinates(lat, lon):
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise ValueError(f"coordinate ({lat}, {lon}) outside latitude [-90, 90] "
                         "/ longitude [-180, 180] bounds")


def parse_timestamp(text):
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_line(line):
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) < 4:
        raise ValueError("expected patient_id, timestamp, kind and payload fields")
    patient_id, stamp, kind_text, *rest = fields
    if not patient_id:
        raise ValueError("empty patient_id")
    try:
        ts = parse_timestamp(stamp)
    except ValueError:
        raise ValueError(f"unparseable timestamp {stamp!r}") from None
    try:
        kind = EventKind(kind_text)
    except ValueError:
        raise ValueError(f"unknown kind {kind_text!r}") from None

    if kind is EventKind.LOCATION_FIX:
        if len(rest) != 2:
            raise ValueError("LocationFix takes latitude and longitude")
        lat, lon = float(rest[0]), float(rest[1])
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError("non-finite coordinate")
        _check_coordinates(lat, lon)
        payload = (lat, lon)
    elif kind is EventKind.STEP_COUNT:
        if len(rest) != 1:
            raise ValueError("StepCount takes one steps field")
        steps = int(rest[0])
        if steps < 0:
            raise ValueError("steps must be >= 0")
        payload = (steps,)
    else:
        if len(rest) != 1:
            raise ValueError("ScreenUse takes one duration field")
        duration = float(rest[0])
        if not (math.isfinite(duration) and duration >= 0):
            raise ValueError("duration must be finite and >= 0")
        payload = (duration,)
    return RawEvent(patient_id, ts, kind, payload)


def parse_events(stream):
    """Parse tab-separated event lines.

    Blank lines and lines starting with ``#`` are skipped. Malformed lines do
    not stop parsing; they are collected as :class:`LineError` records.

    Returns
    -------
    events : list of RawEvent
        Sorted by (patient_id, timestamp).
    errors : list of LineError
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    events, errors = [], []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            events.append(_parse_line(line))
        except ValueError as exc:
            errors.append(LineError(lineno, line.rstrip("\r\n"), str(exc)))
    events.sort(key=lambda e: (e.patient_id, e.timestamp, e.kind.value, e.payload))
    return events, errors


def format_event(event):
    payload = "\t".join(repr(v) if isinstance(v, float) else str(v)
                        for v in event.payload)
    stamp = event.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"{event.patient_id}\t{stamp}\t{event.kind.value}\t{payload}"


def haversine_km(a, b):
    """Great-circle distance in km between (lat, lon) pairs in degrees.

    Accepts scalars or broadcastable arrays.
    """
    lat1, lon1 = np.radians(a[0]), np.radians(a[1])
    lat2, lon2 = np.radians(b[0]), np.radians(b[1])
    h = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    d = 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    return float(d) if np.ndim(d) == 0 else d


def local_time(ts, utc_offset_hours):
    return ts + timedelta(hours=utc_offset_hours)


def _slot(local):
    return (local.hour * 3600 + local.minute * 60 + local.second) // SLOT_SECONDS


def infer_home(events, window_days=14, night=(0, 12), radius=250.0,
               utc_offset_hours=0.0):
    """Place the home at the per-coordinate median of night-time fixes.

    Only fixes from the first ``window_days`` distinct local dates on which
    the patient produced any fix are used. ``night`` is a half-open slot range;
    the default covers 00:00-06:00 local time.
    """
    fixes = [e for e in events if e.kind is EventKind.LOCATION_FIX]
    local = [(local_time(e.timestamp, utc_offset_hours), e) for e in fixes]
    first_days = sorted({t.date() for t, _ in local})[:window_days]
    keep = set(first_days)
    night_fixes = [e.latlon for t, e in local
                   if t.date() in keep and night[0] <= _slot(t) < night[1]]
    if not night_fixes:
        raise HomeUnresolvable("no night-time location fixes in the home window")
    lat, lon = np.median(np.asarray(night_fixes), axis=0)
    return HomeModel((float(lat), float(lon)), radius)


def build_daily_features(events, day, home=None, utc_offset_hours=0.0,
                         patient_id=None):
    """Aggregate one patient-day of events into a :class:`DailyFeatures`.

    A slot is observed for a block only when an event of that block's kind
    contributes to it: a step record, a location fix, a screen-use interval
    touching the slot (a zero-length record marks the slot observed with
    value 0), or a fix plus a resolved home for home presence.
    """
    if patient_id is None:
        patient_id = events[0].patient_id if events else ""
    values = np.zeros((len(BLOCKS), N_SLOTS))
    observed = np.zeros((len(BLOCKS), N_SLOTS), dtype=bool)
    dist = np.zeros(N_SLOTS)
    steps = np.zeros(N_SLOTS)
    last_fix = {}
    prev_fix = None
    day_start = datetime(day.year, day.month, day.day)

    ordered = sorted(events, key=lambda e: (e.timestamp, e.kind.value, e.payload))
    for e in ordered:
        t = local_time(e.timestamp, utc_offset_hours).replace(tzinfo=None)
        if t.date() != day:
            raise DateMismatch(f"event at {t} does not fall on {day}")
        s = _slot(t)
        if e.kind is EventKind.STEP_COUNT:
            steps[s] += e.payload[0]
            observed[1, s] = True
        elif e.kind is EventKind.LOCATION_FIX:
            if prev_fix is not None:
                dist[s] += haversine_km(prev_fix, e.latlon)
            prev_fix = e.latlon
            observed[0, s] = True
            last_fix[s] = e.latlon
        else:
            start = (t - day_start).total_seconds()
            end = min(start + e.payload[0], N_SLOTS * SLOT_SECONDS)
            observed[2, s] = True
            if end > start:
                last = min(int(math.ceil(end / SLOT_SECONDS)), N_SLOTS)
                observed[2, s:last] = True
                values[2, s:last] = 1.0

    values[0] = np.log1p(dist)
    values[1] = np.log1p(steps)
    if home is not None:
        for s, latlon in last_fix.items():
            observed[3, s] = True
            values[3, s] = 1.0 if home.contains(latlon) else 0.0
    return DailyFeatures(patient_id, day, values, ~observed)


def featurize(events, utc_offset_hours=0.0, home_radius=250.0, home_window_days=14):
    """Group events by patient and local date into gap-free series.

    Returns ``{patient_id: PatientSeries}``; patients whose home cannot be
    resolved get a fully masked home-presence block.
    """
    by_patient = defaultdict(list)
    for e in events:
        by_patient[e.patient_id].append(e)
    out = {}
    for pid in sorted(by_patient):
        evs = by_patient[pid]
        try:
            home = infer_home(evs, home_window_days, radius=home_radius,
                              utc_offset_hours=utc_offset_hours)
        except HomeUnresolvable:
            home = None
        by_day = defaultdict(list)
        for e in evs:
            by_day[local_time(e.timestamp, utc_offset_hours).date()].append(e)
        days = [build_daily_features(by_day[d], d, home, utc_offset_hours, pid)
                for d in sorted(by_day)]
        out[pid] = PatientSeries.from_days(pid, days)
    return out


def feature_columns():
    return [f"{b}_{s}" for b in BLOCKS for s in range(N_SLOTS)]


def write_daily_features(series, stream):
    """Write one or more series as CSV with ``null`` for missing entries.

    Floats are written with ``repr`` so that reading back is exact.
    """
    if isinstance(series, PatientSeries):
        series = [series]
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["patient_id", "date", *feature_columns()])
    for s in series:
        for d in s.days:
            row = [NULL if m else repr(float(v))
                   for v, m in zip(d.values.ravel(), d.missing.ravel())]
            writer.writerow([s.patient_id, d.date.isoformat(), *row])


def _parse_value(text, where):
    if text == NULL:
        return np.nan
    try:
        v = float(text)
    except ValueError:
        raise BadValue(f"{where}: cannot parse {text!r}") from None
    if not math.isfinite(v):
        raise BadValue(f"{where}: non-finite value {text!r}")
    return v


def read_daily_features(stream):
    """Read a daily-feature CSV into ``{patient_id: PatientSeries}``."""
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        return {}
    expected = ["patient_id", "date", *feature_columns()]
    if header != expected:
        raise BadValue("daily-feature header does not match the 4x48 block layout")
    rows = defaultdict(list)
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(expected):
            raise BadValue(f"line {lineno}: expected {len(expected)} fields, got {len(row)}")
        pid, day = row[0], date.fromisoformat(row[1])
        vals = np.array([_parse_value(v, f"line {lineno}") for v in row[2:]])
        rows[pid].append(DailyFeatures(pid, day, vals, np.isnan(vals)))
    return {pid: PatientSeries.from_days(pid, days) for pid, days in rows.items()}


def load_daily_features(stream, patient_id=None):
    """Load a single patient's series from a daily-feature file."""
    all_series = read_daily_features(stream)
    if patient_id is not None:
        return all_series[patient_id]
    if len(all_series) != 1:
        raise ValueError(f"file holds {len(all_series)} patients; pass patient_id")
    return next(iter(all_series.values()))
