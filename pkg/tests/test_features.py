import io
import math
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from behaviorshift.exceptions import BadValue, DateMismatch, DuplicateDay, HomeUnresolvable
from behaviorshift.features import (
    N_SLOTS, DailyFeatures, EventKind, HomeModel, PatientSeries,
    build_daily_features, featurize, format_event, haversine_km, infer_home,
    load_daily_features, parse_events, read_daily_features, write_daily_features)

from .conftest import DAY, at, fix, screen, steps

lat = st.floats(-90, 90, allow_nan=False)
lon = st.floats(-180, 180, allow_nan=False)


class TestParseEvents:
    def test_empty_stream(self):
        assert parse_events(io.StringIO("")) == ([], [])

    def test_location_fix_round_trip(self):
        events, errors = parse_events("p1\t2021-03-01T08:15:00Z\tLocationFix\t40.4\t-3.7\n")
        assert errors == []
        (e,) = events
        assert e.patient_id == "p1"
        assert e.timestamp == at(DAY, 8, 15)
        assert e.kind is EventKind.LOCATION_FIX
        assert e.payload == (40.4, -3.7)
        assert parse_events(format_event(e) + "\n")[0] == [e]

    def test_latitude_out_of_bounds(self):
        events, errors = parse_events("p1\t2021-03-01T08:15:00Z\tLocationFix\t91.0\t0\n")
        assert events == []
        assert errors[0].lineno == 1
        assert "bounds" in errors[0].message

    def test_collects_errors_and_continues(self):
        text = ("p2\t2021-03-01T10:00:00Z\tStepCount\t10\n"
                "p1\tnot-a-time\tStepCount\t5\n"
                "# comment\n"
                "p1\t2021-03-01T09:00:00+01:00\tScreenUse\t60\n"
                "p1\t2021-03-01T09:00:00Z\tTeleport\t1\n"
                "p1\t2021-03-01T07:00:00Z\tStepCount\t-3\n")
        events, errors = parse_events(text)
        assert [e.patient_id for e in events] == ["p1", "p2"]
        assert events[0].timestamp == at(DAY, 8)
        assert [err.lineno for err in errors] == [2, 5, 6]
        assert "timestamp" in errors[0].message
        assert "kind" in errors[1].message


class TestHaversine:
    def test_coincident(self):
        assert haversine_km((0, 0), (0, 0)) == 0.0

    def test_one_degree_on_equator(self):
        assert haversine_km((0, 0), (0, 1)) == pytest.approx(6371.0 * math.pi / 180, abs=1e-9)
        assert haversine_km((0, 0), (0, 1)) == pytest.approx(111.195, abs=1e-3)

    def test_antipodal(self):
        assert haversine_km((90, 0), (-90, 0)) == pytest.approx(20015.09, abs=0.01)

    @given(lat, lon, lat, lon)
    def test_symmetric_and_non_negative(self, a1, o1, a2, o2):
        d = haversine_km((a1, o1), (a2, o2))
        assert d == haversine_km((a2, o2), (a1, o1))
        assert 0 <= d <= math.pi * 6371.0 + 1e-6


class TestInferHome:
    def test_constant_night_point(self):
        evs = [fix(at(DAY + timedelta(days=i), 2), 40.0, -3.0) for i in range(3)]
        assert infer_home(evs).center == (40.0, -3.0)

    def test_median(self):
        evs = [fix(at(DAY, 1), 0, 0), fix(at(DAY, 2), 0, 0), fix(at(DAY, 3), 0, 0.01)]
        assert infer_home(evs).center == (0.0, 0.0)

    def test_daytime_fixes_ignored(self):
        evs = [fix(at(DAY, 1), 10, 10), fix(at(DAY, 12), 50, 50), fix(at(DAY, 13), 50, 50)]
        assert infer_home(evs).center == (10.0, 10.0)

    def test_window_limits_days(self):
        evs = [fix(at(DAY, 1), 1, 1),
               fix(at(DAY + timedelta(days=1), 1), 5, 5),
               fix(at(DAY + timedelta(days=2), 1), 5, 5)]
        assert infer_home(evs, window_days=1).center == (1.0, 1.0)

    def test_no_night_fixes(self):
        with pytest.raises(HomeUnresolvable):
            infer_home([fix(at(DAY, 12), 0, 0)])

    def test_radius_validation(self):
        with pytest.raises(ValueError):
            HomeModel((0, 0), 0.0)


class TestBuildDailyFeatures:
    def test_no_events_is_fully_missing(self):
        d = build_daily_features([], DAY, patient_id="p1")
        assert d.fully_missing

    def test_single_step_count(self):
        d = build_daily_features([steps(at(DAY, 0, 10), 100)], DAY)
        assert d.values[1, 0] == pytest.approx(math.log(101))
        assert d.values[1, 0] == pytest.approx(4.6151, abs=1e-4)
        assert not d.missing[1, 0]
        assert d.missing[1, 1:].all()
        assert d.missing[[0, 2, 3]].all()

    def test_distance_goes_to_later_fix_slot(self):
        evs = [fix(at(DAY, 0, 20), 0, 0), fix(at(DAY, 1, 40), 0, 1)]
        d = build_daily_features(evs, DAY)
        assert d.values[0, 3] == pytest.approx(math.log(1 + 6371.0 * math.pi / 180))
        assert d.values[0, 3] == pytest.approx(4.7203, abs=1e-4)
        assert d.values[0, 0] == 0.0
        assert d.missing[0, [0, 3]].tolist() == [False, False]

    def test_screen_use_overlap_and_home(self):
        home = HomeModel((10.0, 10.0), 250.0)
        evs = [screen(at(DAY, 9, 50), 1200),
               screen(at(DAY, 12, 0), 0),
               fix(at(DAY, 9, 5), 10.0, 10.0),
               fix(at(DAY, 9, 25), 10.1, 10.0)]
        d = build_daily_features(evs, DAY, home)
        assert d.values[2, 19] == 1.0 and d.values[2, 20] == 1.0
        assert d.values[2, 24] == 0.0 and not d.missing[2, 24]
        assert d.missing[2, 21]
        # last fix of slot 18 is ~11 km away from home
        assert d.values[3, 18] == 0.0

    def test_wrong_date(self):
        with pytest.raises(DateMismatch):
            build_daily_features([steps(at(DAY + timedelta(days=1), 1), 5)], DAY)

    def test_utc_offset_shifts_slots(self):
        d = build_daily_features([steps(at(DAY, 0, 10), 5)], DAY + timedelta(days=0),
                                 utc_offset_hours=2)
        assert not d.missing[1, 4]

    @settings(max_examples=30, deadline=None)
    @given(st.randoms(use_true_random=False))
    def test_permutation_invariant_and_bounded(self, rnd):
        home = HomeModel((40.0, -3.0), 500.0)
        evs = []
        for _ in range(40):
            t = at(DAY, rnd.randrange(24), rnd.randrange(60), rnd.randrange(60))
            kind = rnd.randrange(3)
            if kind == 0:
                evs.append(fix(t, 40 + rnd.uniform(-0.05, 0.05), -3 + rnd.uniform(-0.05, 0.05)))
            elif kind == 1:
                evs.append(steps(t, rnd.randrange(500)))
            else:
                evs.append(screen(t, rnd.uniform(0, 4000)))
        a = build_daily_features(evs, DAY, home)
        shuffled = evs[:]
        rnd.shuffle(shuffled)
        b = build_daily_features(shuffled, DAY, home)
        assert a == b
        real = a.real_blocks[~a.missing[:2]]
        binary = a.bin_blocks[~a.missing[2:]]
        assert (real >= 0).all() and np.isfinite(real).all()
        assert np.isin(binary, (0.0, 1.0)).all()


def _series(rng, n=5, pid="p1"):
    days = []
    for i in range(n):
        values = rng.random((4, N_SLOTS)) * 3
        values[2:] = rng.random((2, N_SLOTS)) < 0.5
        missing = rng.random((4, N_SLOTS)) < 0.2
        days.append(DailyFeatures(pid, DAY + timedelta(days=i), values, missing))
    return PatientSeries(pid, days)


class TestDailyFeatureFile:
    def test_round_trip(self, rng):
        s = _series(rng)
        s.days[2] = DailyFeatures.empty("p1", s.days[2].date)
        buf = io.StringIO()
        write_daily_features(s, buf)
        buf.seek(0)
        assert load_daily_features(buf) == s

    def test_gap_filled(self, rng):
        s = _series(rng, 3)
        buf = io.StringIO()
        write_daily_features(PatientSeries("p1", [s.days[0]]), buf)
        lines = buf.getvalue().splitlines()
        other = io.StringIO()
        write_daily_features(PatientSeries("p1", [s.days[2]]), other)
        text = "\n".join(lines + other.getvalue().splitlines()[1:]) + "\n"
        loaded = load_daily_features(io.StringIO(text))
        assert loaded.dates == [DAY, DAY + timedelta(days=1), DAY + timedelta(days=2)]
        assert loaded.days[1].fully_missing

    def test_header_names_blocks(self, rng):
        buf = io.StringIO()
        write_daily_features(_series(rng, 1), buf)
        header = buf.getvalue().splitlines()[0].split(",")
        assert header[2] == "log_distance_0" and header[-1] == "home_presence_47"
        assert len(header) == 2 + 4 * 48

    def test_nan_literal_rejected(self, rng):
        buf = io.StringIO()
        write_daily_features(_series(rng, 1), buf)
        header, row = buf.getvalue().splitlines()
        fields = row.split(",")
        fields[2] = "NaN"
        with pytest.raises(BadValue):
            read_daily_features(io.StringIO(header + "\n" + ",".join(fields) + "\n"))

    def test_duplicate_day(self, rng):
        buf = io.StringIO()
        write_daily_features(_series(rng, 1), buf)
        header, row = buf.getvalue().splitlines()
        with pytest.raises(DuplicateDay):
            read_daily_features(io.StringIO("\n".join([header, row, row]) + "\n"))

    def test_masked_entries_hold_no_value(self):
        values = np.ones((4, N_SLOTS))
        missing = np.zeros((4, N_SLOTS), dtype=bool)
        missing[0, 5] = True
        d = DailyFeatures("p", DAY, values, missing)
        assert np.isnan(d.values[0, 5])

    def test_binary_validation(self):
        values = np.zeros((4, N_SLOTS))
        values[3, 0] = 0.5
        with pytest.raises(BadValue):
            DailyFeatures("p", DAY, values, np.zeros((4, N_SLOTS), dtype=bool))


def test_featurize_groups_patients_and_fills_gaps():
    d2 = DAY + timedelta(days=2)
    evs = [fix(at(DAY, 1), 40, -3), steps(at(DAY, 9), 300), fix(at(DAY, 10), 40.01, -3),
           steps(at(d2, 9), 50), steps(at(DAY, 9), 7, pid="p2")]
    out = featurize(evs)
    assert sorted(out) == ["p1", "p2"]
    s = out["p1"]
    assert len(s) == 3 and s.days[1].fully_missing
    assert s.days[0].values[3, 2] == 1.0  # 01:00 fix at home
    assert s.days[0].values[3, 20] == 0.0  # ~1.1 km away
    assert out["p2"].days[0].missing[3].all()  # no fixes: home unresolved
