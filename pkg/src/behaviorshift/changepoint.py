"""Bayesian online change-point detection over daily profile posteriors.

Each observed day contributes a count vector obtained by drawing S samples
from that day's profile posterior. Within a run the counts are Multinomial
with a Dirichlet prior on the profile frequencies, so every run length
carries its own Dirichlet hyperparameters, updated as ``alpha + counts``.
The run-length posterior is kept in log space.
"""

import csv
from datetime import date
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_probability_rows, check_simplex
from .exceptions import MissingDay, NumericalCollapse

DEFAULT_S = 100
DEFAULT_HAZARD = 0.01
DEFAULT_PRUNE = 1e-8
DEFAULT_MAX_SUPPORT = 1464
DEFAULT_RECENT_WINDOW = 7


@dataclass(frozen=True)
class CountVector:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if (c < 0).any() or not np.array_equal(c, np.round(c)):
            raise ValueError("counts must be non-negative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def S(self):
        return int(self.counts.sum())

    @property
    def K(self):
        return len(self.counts)


def sample_counts(probs, S, rng):
    """Tally ``S`` i.i.d. profile draws from one day's posterior."""
    if probs is None or np.isnan(np.asarray(probs, dtype=np.float64)).all():
        raise MissingDay("fully missing day has no posterior to sample")
    if S < 1:
        raise ValueError("S must be >= 1")
    probs = check_simplex(probs)
    return CountVector(rng.multinomial(S, probs / probs.sum()))


def dirmult_log_predictive(counts, alpha):
    """Log Dirichlet-Multinomial probability of ``counts``.

    ``alpha`` may be a single K-vector or an (R, K) stack, in which case one
    value per row is returned.
    """
    c = np.asarray(getattr(counts, "counts", counts), dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    S = c.sum()
    A = alpha.sum(axis=-1)
    log_coef = gammaln(S + 1) - gammaln(c + 1).sum()
    return (log_coef + gammaln(A) - gammaln(A + S)
            + (gammaln(alpha + c) - gammaln(alpha)).sum(axis=-1))


@dataclass
class RunLengthState:
    """Pruned run-length posterior.

    ``run_lengths`` is ascending and always starts with 0; ``alphas[i]`` are
    the Dirichlet hyperparameters of the run of length ``run_lengths[i]``.
    """

    alpha0: np.ndarray
    hazard: float
    t: int = 0
    run_lengths: np.ndarray = None
    log_probs: np.ndarray = None
    alphas: np.ndarray = None

    def __post_init__(self):
        self.alpha0 = np.asarray(self.alpha0, dtype=np.float64)
        if (self.alpha0 <= 0).any():
            raise ValueError("alpha0 must be positive")
        if not 0 < self.hazard < 1:
            raise ValueError("hazard must lie in (0, 1)")
        if self.run_lengths is None:
            self.run_lengths = np.zeros(1, dtype=np.int64)
            self.log_probs = np.zeros(1)
            self.alphas = self.alpha0[None, :].copy()

    @classmethod
    def initial(cls, K, hazard=DEFAULT_HAZARD, alpha0=1.0):
        return cls(np.broadcast_to(np.asarray(alpha0, dtype=np.float64), (K,)).copy(),
                   hazard)

    @property
    def K(self):
        return len(self.alpha0)

    @property
    def probs(self):
        return np.exp(self.log_probs)

    def as_dict(self):
        return dict(zip(self.run_lengths.tolist(), self.probs.tolist()))

    def mass_below(self, window):
        """Posterior probability that the current run is shorter than ``window``."""
        return float(min(np.exp(logsumexp(self.log_probs[self.run_lengths < window])), 1.0))


def _transition(state, log_pred, absorb):
    log_h = np.log(state.hazard)
    log_1mh = np.log1p(-state.hazard)
    weighted = state.log_probs + log_pred
    log_joint = np.concatenate(([logsumexp(weighted) + log_h], weighted + log_1mh))
    log_evidence = logsumexp(log_joint)
    if not np.isfinite(log_evidence):
        raise NumericalCollapse(f"run-length evidence underflowed at t={state.t + 1}")
    grown = state.alphas + absorb if absorb is not None else state.alphas
    return RunLengthState(
        state.alpha0, state.hazard, state.t + 1,
        np.concatenate(([0], state.run_lengths + 1)),
        log_joint - log_evidence,
        np.vstack([state.alpha0[None, :], grown]))


def prune(state, threshold=DEFAULT_PRUNE, max_support=DEFAULT_MAX_SUPPORT):
    """Drop improbable run lengths, keeping r=0 and the MAP run, and renormalise."""
    if not threshold and max_support is None:
        return state
    lp = state.log_probs
    keep = lp >= np.log(threshold) if threshold else np.ones(len(lp), dtype=bool)
    keep[0] = True
    keep[int(np.argmax(lp))] = True
    if max_support is not None and keep.sum() > max_support:
        forced = {0, int(np.argmax(lp))}
        ranked = [i for i in np.argsort(-lp, kind="stable")
                  if keep[i] and i not in forced]
        keep = np.zeros_like(keep)
        keep[list(forced) + ranked[:max_support - len(forced)]] = True
    if keep.all():
        return state
    lp = lp[keep]
    return RunLengthState(state.alpha0, state.hazard, state.t,
                          state.run_lengths[keep], lp - logsumexp(lp),
                          state.alphas[keep])


def update(state, counts, threshold=DEFAULT_PRUNE, max_support=DEFAULT_MAX_SUPPORT):
    """Absorb one day's count vector into the run-length posterior."""
    c = np.asarray(getattr(counts, "counts", counts), dtype=np.float64)
    if c.shape != (state.K,):
        raise ValueError(f"count vector has {c.size} entries, state has K={state.K}")
    log_pred = dirmult_log_predictive(c, state.alphas)
    return prune(_transition(state, log_pred, c), threshold, max_support)


def advance_missing(state, threshold=DEFAULT_PRUNE, max_support=DEFAULT_MAX_SUPPORT):
    """Hazard-only step for a fully missing day; hyperparameters unchanged."""
    return prune(_transition(state, np.zeros(len(state.log_probs)), None),
                 threshold, max_support)


def map_run_length(state):
    """Run length with the largest posterior mass, smallest on ties."""
    return int(state.run_lengths[int(np.argmax(state.log_probs))])


@dataclass
class RunLengthTrace:
    dates: list
    r_star: np.ndarray
    p_change: np.ndarray
    p_recent: np.ndarray
    map_mass: np.ndarray
    support_size: np.ndarray
    missing: np.ndarray
    recent_window: int = DEFAULT_RECENT_WINDOW
    posteriors: list = field(default_factory=list)

    def __len__(self):
        return len(self.r_star)

    def __eq__(self, other):
        if not isinstance(other, RunLengthTrace):
            return NotImplemented
        return (self.dates == other.dates and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("r_star", "p_change", "p_recent", "map_mass",
                      "support_size", "missing")))


def _settle(p):
    # log-space renormalisation leaves ~1e-15 relative jitter; without rounding
    # it would rank days whose posteriors are mathematically equal
    return float(format(p, ".12g"))


def day_rng(seed, day_index):
    """Independent generator for one day, stable under evaluation order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(day_index)]))


def run_detector(posteriors, S=DEFAULT_S, alpha0=1.0, hazard=DEFAULT_HAZARD,
                 prune_threshold=DEFAULT_PRUNE, max_support=DEFAULT_MAX_SUPPORT,
                 seed=0, dates=None, recent_window=DEFAULT_RECENT_WINDOW,
                 keep_posteriors=False):
    """Run the detector over one patient's day-ordered posteriors.

    ``posteriors`` is an (n_days, K) array with NaN rows for fully missing
    days, or a sequence of :class:`ProfilePosterior`.
    """
    if len(posteriors) and hasattr(posteriors[0], "fully_missing"):
        dates = [p.date for p in posteriors] if dates is None else dates
        K = next((len(p.probs) for p in posteriors if not p.fully_missing), 1)
        P = np.vstack([np.full(K, np.nan) if p.fully_missing else p.probs
                       for p in posteriors])
    else:
        P = posteriors
    P, missing = check_probability_rows(P)
    n, K = P.shape
    if dates is None:
        dates = list(range(n))

    state = RunLengthState.initial(K, hazard, alpha0)
    out = {k: np.empty(n) for k in ("p_change", "p_recent", "map_mass")}
    r_star = np.empty(n, dtype=np.int64)
    support = np.empty(n, dtype=np.int64)
    kept = []
    for t in range(n):
        if missing[t]:
            state = advance_missing(state, prune_threshold, max_support)
        else:
            c = sample_counts(P[t], S, day_rng(seed, t))
            state = update(state, c, prune_threshold, max_support)
        i = int(np.argmax(state.log_probs))
        r_star[t] = state.run_lengths[i]
        out["map_mass"][t] = _settle(np.exp(state.log_probs[i]))
        out["p_change"][t] = _settle(np.exp(state.log_probs[0]))
        out["p_recent"][t] = _settle(state.mass_below(recent_window))
        support[t] = len(state.run_lengths)
        if keep_posteriors:
            kept.append(state.as_dict())
    return RunLengthTrace(list(dates), r_star, out["p_change"], out["p_recent"],
                          out["map_mass"], support, missing, recent_window, kept)


class OnlineChangeDetector(BaseEstimator, TransformerMixin):
    """Transformer from per-day profile posteriors to run-length statistics.

    ``transform`` returns an (n_days, 3) array of MAP run length, recent-change
    probability and MAP mass; the full trace is kept as ``trace_``.
    """

    def __init__(self, S=DEFAULT_S, alpha0=1.0, hazard=DEFAULT_HAZARD,
                 prune_threshold=DEFAULT_PRUNE, max_support=DEFAULT_MAX_SUPPORT,
                 recent_window=DEFAULT_RECENT_WINDOW, random_state=0):
        self.S = S
        self.alpha0 = alpha0
        self.hazard = hazard
        self.prune_threshold = prune_threshold
        self.max_support = max_support
        self.recent_window = recent_window
        self.random_state = random_state

    def fit(self, X=None, y=None):
        # stateless between series: the posterior restarts for every call
        return self

    def run(self, P, dates=None):
        self.trace_ = run_detector(
            P, self.S, self.alpha0, self.hazard, self.prune_threshold,
            self.max_support, self.random_state, dates, self.recent_window)
        return self.trace_

    def transform(self, P):
        tr = self.run(P)
        return np.column_stack([tr.r_star, tr.p_recent, tr.map_mass])


TRACE_FIELDS = ("date", "r_star", "p_change", "map_mass", "support_size",
                "missing_flag", "p_recent")


def _fmt(x):
    return repr(float(x))


def write_trace(trace, stream, patient_id=None, header=True):
    writer = csv.writer(stream, lineterminator="\n")
    if header:
        writer.writerow((("patient_id",) if patient_id is not None else ()) + TRACE_FIELDS)
    for i, d in enumerate(trace.dates):
        row = [str(d), int(trace.r_star[i]), _fmt(trace.p_change[i]),
               _fmt(trace.map_mass[i]), int(trace.support_size[i]),
               int(trace.missing[i]), _fmt(trace.p_recent[i])]
        writer.writerow(([patient_id] if patient_id is not None else []) + row)


def write_traces(traces, stream):
    """Write ``{patient_id: RunLengthTrace}`` to one file keyed by patient."""
    csv.writer(stream, lineterminator="\n").writerow(("patient_id",) + TRACE_FIELDS)
    for pid in sorted(traces):
        write_trace(traces[pid], stream, pid, header=False)


def read_traces(stream, recent_window=DEFAULT_RECENT_WINDOW):
    """Read a trace file into ``{patient_id: RunLengthTrace}``.

    Files without a ``patient_id`` column map to the key ``None``.
    """
    reader = csv.DictReader(stream)
    rows = {}
    for row in reader:
        rows.setdefault(row.get("patient_id"), []).append(row)
    out = {}
    for pid, rs in rows.items():
        out[pid] = RunLengthTrace(
            [date.fromisoformat(r["date"]) for r in rs],
            np.array([int(r["r_star"]) for r in rs], dtype=np.int64),
            np.array([float(r["p_change"]) for r in rs]),
            np.array([float(r["p_recent"]) for r in rs]),
            np.array([float(r["map_mass"]) for r in rs]),
            np.array([int(r["support_size"]) for r in rs], dtype=np.int64),
            np.array([r["missing_flag"] == "1" for r in rs]),
            recent_window)
    return out
