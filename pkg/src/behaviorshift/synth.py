"""Synthetic patients with planted behaviour changes.

Days are drawn from a known Gaussian-Bernoulli mixture whose profile
frequencies change at segment boundaries, so every stage of the pipeline
can be checked against ground truth.
"""

from dataclasses import dataclass, replace
from datetime import date, timedelta

import numpy as np

from .features import N_SLOTS, PatientSeries

DAYTIME = slice(16, 44)  # 08:00-22:00
EVENING = slice(32, 48)
WEEKLY_HIGH = (5 / 7, 2 / 7)
WEEKLY_LOW = (2 / 7, 5 / 7)
# day-level and slot-level rates giving 29% of entries missing overall
NOISY_DAY_RATE = 0.2
NOISY_SLOT_RATE = 0.1125
_STREAM_DAYS, _STREAM_VALUES, _STREAM_MISSING = 0, 1, 2


@dataclass(frozen=True)
class BehaviorSegment:
    start: int
    length: int
    probs: tuple

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("segment length must be >= 1")
        p = np.asarray(self.probs, dtype=np.float64)
        if (p < 0).any() or abs(p.sum() - 1) > 1e-9:
            raise ValueError("segment profile distribution must lie on the simplex")


@dataclass
class GroundTruth:
    means: np.ndarray  # (K, 96)
    stds: np.ndarray  # (K, 96)
    bernoulli: np.ndarray  # (K, 96)
    segments: list
    day_rate: float = 0.0
    slot_rate: float = 0.0
    seed: int = 0
    patient_id: str = "synthetic"
    start_date: date = date(2020, 1, 1)
    description: str = ""

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        self.bernoulli = np.asarray(self.bernoulli, dtype=np.float64)
        pos = 0
        for seg in self.segments:
            if seg.start != pos:
                raise ValueError("segments must tile the series without gaps")
            if len(seg.probs) != self.K:
                raise ValueError("segment distribution length must equal K")
            pos += seg.length
        if not (0 <= self.day_rate < 1 and 0 <= self.slot_rate < 1):
            raise ValueError("missing rates must lie in [0, 1)")

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def n_days(self):
        return sum(s.length for s in self.segments)

    @property
    def change_points(self):
        """Day indices where a new segment starts, excluding day 0."""
        return [s.start for s in self.segments[1:]]

    @property
    def missing_rate(self):
        return self.day_rate + (1 - self.day_rate) * self.slot_rate


def activity_profiles(K=2, separation=5.0, sd=0.3):
    """Circadian profiles whose daytime means differ by ``separation`` SDs.

    Profile 0 is "high activity" (more movement, away from home), profile 1
    "low activity" (less movement, more phone use, at home) and profile 2,
    when requested, an evening-shifted routine. ``separation=0`` makes all
    profiles identical.
    """
    if K not in (1, 2, 3):
        raise ValueError("activity_profiles supports K in {1, 2, 3}")
    gap = separation * sd
    strength = min(separation / 5.0, 1.0)

    base_dist = np.full(N_SLOTS, 0.5)
    base_steps = np.full(N_SLOTS, 1.0)
    base_dist[DAYTIME] = 2.0 + gap
    base_steps[DAYTIME] = 4.0 + gap
    usage = np.full(N_SLOTS, 0.1)
    home = np.full(N_SLOTS, 0.95)
    usage[DAYTIME], home[DAYTIME] = 0.3, 0.2
    high = (np.concatenate([base_dist, base_steps]), np.concatenate([usage, home]))

    low_real = high[0].copy()
    low_real[DAYTIME] -= gap
    low_real[N_SLOTS:][DAYTIME] -= gap
    low_bin = high[1].copy()
    low_bin[DAYTIME] += strength * 0.4
    low_bin[N_SLOTS:][DAYTIME] += strength * 0.7
    profiles = [high, (low_real, low_bin)]

    if K == 3:
        eve_real = low_real.copy()
        eve_real[EVENING] += 2 * gap
        eve_real[N_SLOTS:][EVENING] += 2 * gap
        eve_bin = high[1].copy()
        eve_bin[EVENING] = np.clip(eve_bin[EVENING] + strength * 0.5, 0, 0.95)
        profiles.append((eve_real, eve_bin))

    profiles = profiles[:K]
    means = np.stack([p[0] for p in profiles])
    bern = np.stack([p[1] for p in profiles])
    return means, np.full_like(means, sd), bern


def _segments(*parts):
    out, start = [], 0
    for length, probs in parts:
        out.append(BehaviorSegment(start, length, tuple(probs)))
        start += length
    return out


def default_scenarios(n_days=200, separation=5.0, seed=0):
    """Named presets.

    ``stationary``
        One behaviour (5 high-activity days in 7); no change-point.
    ``inversion``
        The weekly 5/2 high/low proportion flips to 2/5 at the midpoint.
        With strong separation the flip is detectable within days.
    ``three-regime``
        Three profiles, each dominant (80%) in one third of the series.
    ``noisy-missing``
        ``inversion`` with 29% of entries missing (20% whole days, 11.25% of
        slots on the remaining days).
    """
    two = activity_profiles(2, separation)
    three = activity_profiles(3, separation)
    half = n_days // 2
    third = n_days // 3
    return {
        "stationary": GroundTruth(*two, _segments((n_days, WEEKLY_HIGH)), seed=seed,
                                  description="no change-point"),
        "inversion": GroundTruth(*two, _segments((half, WEEKLY_HIGH),
                                                 (n_days - half, WEEKLY_LOW)),
                                 seed=seed,
                                 description="5/2 -> 2/5 weekly flip at midpoint"),
        "three-regime": GroundTruth(*three, _segments(
            (third, (0.8, 0.1, 0.1)), (third, (0.1, 0.8, 0.1)),
            (n_days - 2 * third, (0.1, 0.1, 0.8))), seed=seed,
            description="three dominant profiles in turn"),
        "noisy-missing": GroundTruth(*two, _segments((half, WEEKLY_HIGH),
                                                     (n_days - half, WEEKLY_LOW)),
                                     day_rate=NOISY_DAY_RATE,
                                     slot_rate=NOISY_SLOT_RATE, seed=seed,
                                     description="inversion with 29% missing"),
    }


def scenario(name, **kwargs):
    return default_scenarios(**kwargs)[name]


def _stream(seed, tag):
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))


def generate(gt, return_profiles=False):
    """Draw a series from ``gt``.

    Returns ``(series, change_point_dates)`` and, with ``return_profiles``,
    the true per-day profile indices as a third element.
    """
    rng_z = _stream(gt.seed, _STREAM_DAYS)
    rng_x = _stream(gt.seed, _STREAM_VALUES)
    z = np.concatenate([rng_z.choice(gt.K, size=s.length, p=np.asarray(s.probs))
                        for s in gt.segments])
    n_real = gt.means.shape[1]
    real = gt.means[z] + gt.stds[z] * rng_x.standard_normal((len(z), n_real))
    binary = (rng_x.random((len(z), gt.bernoulli.shape[1])) < gt.bernoulli[z])
    X = np.hstack([real, binary.astype(np.float64)])
    series = PatientSeries.from_matrix(gt.patient_id, gt.start_date, X)
    if gt.day_rate or gt.slot_rate:
        series = inject_missing(series, gt.day_rate, gt.slot_rate,
                                _stream(gt.seed, _STREAM_MISSING))
    cps = [gt.start_date + timedelta(days=c) for c in gt.change_points]
    return (series, cps, z) if return_profiles else (series, cps)


def inject_missing(series, day_rate, slot_rate, seed):
    """Blank whole days with ``day_rate``, then single slots with ``slot_rate``.

    Unmasked values are never altered.
    """
    if not (0 <= day_rate < 1 and 0 <= slot_rate < 1):
        raise ValueError("missing rates must lie in [0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = series.to_matrix()
    drop_day = rng.random(X.shape[0]) < day_rate
    drop_slot = rng.random(X.shape) < slot_rate
    X[drop_day] = np.nan
    X[drop_slot] = np.nan
    return PatientSeries.from_matrix(series.patient_id, series.start_date, X)


def with_seed(gt, seed, patient_id=None):
    return replace(gt, seed=seed, patient_id=patient_id or gt.patient_id)


def plant_events(change_points, seed, max_lag=6):
    """One event per change-point, ``0..max_lag`` days after it (uniform)."""
    rng = np.random.default_rng(seed)
    return [cp + timedelta(days=int(rng.integers(0, max_lag + 1)))
            for cp in change_points]
