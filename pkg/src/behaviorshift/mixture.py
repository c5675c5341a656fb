"""Gaussian-Bernoulli mixture over daily feature vectors.

Each day is a row of ``X``; the first ``n_real`` columns are Gaussian with a
diagonal covariance per component, the remaining columns are Bernoulli.
NaN entries are missing and are marginalised out, which for a diagonal
model simply drops their terms from the log-likelihood. Fully missing rows
are ignored by fitting and get no posterior.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_feature_matrix, observed_rows
from .exceptions import BehaviorShiftError, InsufficientData, MissingDay
from .features import N_REAL

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)
VAR_FLOOR = 1e-6
PROB_CLAMP = 1e-3
EMPTY_COMPONENT = 1e-10
FORMAT_VERSION = 1


class EmptyComponent(BehaviorShiftError):
    def __init__(self, components):
        super().__init__(f"components {list(components)} have no responsibility")
        self.components = list(components)


@dataclass
class MixtureParams:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    bernoulli: np.ndarray

    @property
    def n_components(self):
        return len(self.weights)

    @property
    def n_real(self):
        return self.means.shape[1]

    def copy(self):
        return MixtureParams(self.weights.copy(), self.means.copy(),
                             self.variances.copy(), self.bernoulli.copy())


@dataclass
class FitReport:
    log_likelihood: float
    iterations: int
    restarts: int
    bic: float
    converged: bool
    n_components: int
    seed: object = None
    best_restart: int = 0
    traces: list = field(default_factory=list)
    reinitializations: list = field(default_factory=list)
    bic_by_k: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "n_components": self.n_components,
            "log_likelihood": self.log_likelihood,
            "bic": self.bic,
            "iterations": self.iterations,
            "restarts": self.restarts,
            "best_restart": self.best_restart,
            "converged": self.converged,
            "seed": self.seed,
            "bic_by_k": {str(k): v for k, v in self.bic_by_k.items()},
        }


def log_component_density(x, mean, var, mu, observed=None):
    """Log-density of one day under one component, skipping masked entries.

    ``x`` holds the real entries first (``len(mean)`` of them), then the
    binary ones. Missing entries are NaN unless ``observed`` is given.
    """
    x = np.asarray(x, dtype=np.float64)
    if observed is None:
        observed = ~np.isnan(x)
    observed = np.asarray(observed, dtype=bool)
    if not observed.any():
        raise MissingDay("cannot evaluate a fully missing day")
    n_real = len(mean)
    xr, orr = x[:n_real][observed[:n_real]], observed[:n_real]
    xb, ob = x[n_real:][observed[n_real:]], observed[n_real:]
    m, v = np.asarray(mean)[orr], np.asarray(var)[orr]
    p = np.asarray(mu)[ob]
    gauss = -0.5 * np.sum(LOG_2PI + np.log(v) + (xr - m) ** 2 / v)
    bern = np.sum(xb * np.log(p) + (1 - xb) * np.log1p(-p))
    return float(gauss + bern)


def _split(X, observed, n_real):
    # zero-fill masked entries so their stored values can never leak in
    Xz = np.where(observed, X, 0.0)
    return Xz[:, :n_real], observed[:, :n_real], Xz[:, n_real:], observed[:, n_real:]


def component_log_densities(X, observed, params):
    """(n_days, K) matrix of per-component log-densities."""
    Xr, Or, Xb, Ob = _split(X, observed, params.n_real)
    out = np.empty((X.shape[0], params.n_components))
    for k in range(params.n_components):
        var = params.variances[k]
        g = -0.5 * (LOG_2PI + np.log(var) + (Xr - params.means[k]) ** 2 / var)
        mu = params.bernoulli[k]
        b = Xb * np.log(mu) + (1 - Xb) * np.log1p(-mu)
        out[:, k] = np.where(Or, g, 0.0).sum(axis=1) + np.where(Ob, b, 0.0).sum(axis=1)
    return out


def e_step(X, observed, params):
    """Responsibilities and total log-likelihood over the observed days.

    ``X`` and ``observed`` must already exclude fully missing rows.
    """
    if X.shape[0] == 0:
        raise InsufficientData("no observed days")
    log_joint = component_log_densities(X, observed, params) + np.log(params.weights)
    log_norm = logsumexp(log_joint, axis=1)
    resp = np.exp(log_joint - log_norm[:, None])
    return resp, float(log_norm.sum())


def _default_params(K, n_real, n_bin):
    return MixtureParams(np.full(K, 1.0 / K), np.zeros((K, n_real)),
                         np.ones((K, n_real)), np.full((K, n_bin), 0.5))


def m_step(X, observed, resp, previous=None, var_floor=VAR_FLOOR,
           prob_clamp=PROB_CLAMP, n_real=None):
    """Weighted maximum-likelihood update using observed entries only.

    Features never observed under a component keep the value from
    ``previous``. Raises :class:`EmptyComponent` when a component has
    (numerically) zero total responsibility.
    """
    K = resp.shape[1]
    if n_real is None:
        n_real = previous.n_real
    nk = resp.sum(axis=0)
    empty = np.flatnonzero(nk < EMPTY_COMPONENT)
    if empty.size:
        raise EmptyComponent(empty)
    if previous is None:
        previous = _default_params(K, n_real, X.shape[1] - n_real)
    Xr, Or, Xb, Ob = _split(X, observed, n_real)

    den = resp.T @ Or
    has = den > 0
    safe = np.where(has, den, 1.0)
    means = np.where(has, (resp.T @ Xr) / safe, previous.means)
    variances = np.empty_like(means)
    for k in range(K):
        sq = np.where(Or, (Xr - means[k]) ** 2, 0.0)
        variances[k] = resp[:, k] @ sq / safe[k]
    variances = np.where(has, np.maximum(variances, var_floor), previous.variances)

    den_b = resp.T @ Ob
    has_b = den_b > 0
    mu = (resp.T @ Xb) / np.where(has_b, den_b, 1.0)
    mu = np.where(has_b, np.clip(mu, prob_clamp, 1 - prob_clamp), previous.bernoulli)

    return MixtureParams(nk / nk.sum(), means, variances, mu)


def n_parameters(n_components, n_real, n_bin):
    """Free parameters: weights, Gaussian means and variances, Bernoulli rates."""
    K = n_components
    return (K - 1) + K * 2 * n_real + K * n_bin


def bic_score(log_likelihood, n_params, n_days):
    return -2.0 * log_likelihood + n_params * np.log(n_days)


def _reinitialize(params, components, X, observed, rng, prob_clamp):
    """Reseed empty components from random days with inflated variance."""
    params = params.copy()
    n_real = params.n_real
    Xr, Or = X[:, :n_real], observed[:, :n_real]
    pooled = np.nanvar(np.where(Or, Xr, np.nan), axis=0)
    pooled = np.where(np.isfinite(pooled), pooled, 1.0)
    for k in components:
        t = rng.integers(X.shape[0])
        o = observed[t]
        params.means[k] = np.where(o[:n_real], X[t, :n_real], params.means[k])
        params.variances[k] = np.maximum(4.0 * pooled, 1.0)
        b = np.where(o[n_real:], 0.5 * X[t, n_real:] + 0.25, 0.5)
        params.bernoulli[k] = np.clip(b, prob_clamp, 1 - prob_clamp)
        params.weights[k] = 1.0 / params.n_components
    params.weights /= params.weights.sum()
    return params


def _run_em(X, observed, K, n_real, rng, tol, max_iter, var_floor, prob_clamp):
    resp = rng.dirichlet(np.ones(K), size=X.shape[0])
    params = m_step(X, observed, resp, None, var_floor, prob_clamp, n_real)
    trace, reinits = [], []
    converged = False
    prev = -np.inf
    for it in range(max_iter):
        resp, ll = e_step(X, observed, params)
        trace.append(ll)
        if it > 0 and ll - prev <= tol * abs(prev):
            converged = True
            break
        prev = ll
        if it == max_iter - 1:
            break
        try:
            params = m_step(X, observed, resp, params, var_floor, prob_clamp)
        except EmptyComponent as exc:
            logger.debug("reinitialising %s at iteration %d", exc.components, it)
            reinits.append(len(trace))
            params = _reinitialize(params, exc.components, X, observed, rng, prob_clamp)
            prev = -np.inf
    return params, trace, converged, reinits


def _as_seed_sequence(random_state):
    if isinstance(random_state, np.random.SeedSequence):
        return random_state
    if random_state is None or isinstance(random_state, (int, np.integer)):
        return np.random.SeedSequence(random_state)
    raise TypeError("random_state must be None, an int or a SeedSequence")


class ProfileMixture(BaseEstimator):
    """Heterogeneous Gaussian-Bernoulli mixture fitted by EM.

    Parameters
    ----------
    n_components : int
        Number of daily profiles K.
    n_real : int
        Number of leading Gaussian columns; the rest are Bernoulli.
    tol : float
        Stop when the relative log-likelihood gain falls below this.
    max_iter : int
        EM iterations per restart.
    n_init : int
        Restarts from Dirichlet(1) responsibilities; the best final
        log-likelihood wins, ties going to the earliest restart.
    var_floor, prob_clamp : float
        Lower bound on variances and clamp on Bernoulli rates.
    random_state : int or None
    """

    def __init__(self, n_components=1, n_real=N_REAL, tol=1e-6, max_iter=200,
                 n_init=5, var_floor=VAR_FLOOR, prob_clamp=PROB_CLAMP,
                 random_state=None):
        self.n_components = n_components
        self.n_real = n_real
        self.tol = tol
        self.max_iter = max_iter
        self.n_init = n_init
        self.var_floor = var_floor
        self.prob_clamp = prob_clamp
        self.random_state = random_state

    def _observed_data(self, X):
        X, observed = check_feature_matrix(X, self.n_real)
        rows = observed_rows(observed)
        return X[rows], observed[rows], rows

    def fit(self, X, y=None):
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        Xo, Oo, _ = self._observed_data(X)
        n_days = Xo.shape[0]
        if n_days < self.n_components:
            raise InsufficientData(
                f"{n_days} observed days for {self.n_components} components")

        streams = _as_seed_sequence(self.random_state).spawn(self.n_init)
        best = None
        traces, reinits = [], []
        for i, ss in enumerate(streams):
            params, trace, converged, re = _run_em(
                Xo, Oo, self.n_components, self.n_real, np.random.default_rng(ss),
                self.tol, self.max_iter, self.var_floor, self.prob_clamp)
            traces.append(trace)
            reinits.append(re)
            if best is None or trace[-1] > best[1][-1]:
                best = (params, trace, converged, i)

        params, trace, converged, idx = best
        self.params_ = params
        self.n_features_in_ = Xo.shape[1]
        self.log_likelihood_ = trace[-1]
        self.n_iter_ = len(trace)
        self.converged_ = converged
        self.n_observed_days_ = n_days
        self.fit_report_ = FitReport(
            log_likelihood=trace[-1], iterations=len(trace), restarts=self.n_init,
            bic=self._bic(trace[-1], n_days), converged=converged,
            n_components=self.n_components, seed=self.random_state,
            best_restart=idx, traces=traces, reinitializations=reinits)
        return self

    @property
    def weights_(self):
        return self.params_.weights

    @property
    def means_(self):
        return self.params_.means

    @property
    def variances_(self):
        return self.params_.variances

    @property
    def bernoulli_(self):
        return self.params_.bernoulli

    def _bic(self, log_likelihood, n_days):
        n_bin = self.params_.bernoulli.shape[1]
        return bic_score(log_likelihood,
                         n_parameters(self.n_components, self.n_real, n_bin), n_days)

    def predict_proba(self, X):
        """Per-day profile posteriors; fully missing days are rows of NaN."""
        check_is_fitted(self, "params_")
        X, observed = check_feature_matrix(X, self.n_real)
        rows = observed.any(axis=1)
        out = np.full((X.shape[0], self.n_components), np.nan)
        if rows.any():
            out[rows], _ = e_step(X[rows], observed[rows], self.params_)
        return out

    def predict(self, X):
        """Most probable profile per day, -1 for fully missing days."""
        P = self.predict_proba(X)
        labels = np.full(P.shape[0], -1)
        ok = ~np.isnan(P).all(axis=1)
        labels[ok] = np.argmax(P[ok], axis=1)
        return labels

    def score_samples(self, X):
        check_is_fitted(self, "params_")
        X, observed = check_feature_matrix(X, self.n_real)
        rows = observed.any(axis=1)
        out = np.full(X.shape[0], np.nan)
        if rows.any():
            lj = component_log_densities(X[rows], observed[rows], self.params_)
            out[rows] = logsumexp(lj + np.log(self.params_.weights), axis=1)
        return out

    def score(self, X, y=None):
        """Mean log-likelihood per observed day."""
        return float(np.nanmean(self.score_samples(X)))

    def bic(self, X):
        check_is_fitted(self, "params_")
        Xo, Oo, _ = self._observed_data(X)
        _, ll = e_step(Xo, Oo, self.params_)
        return float(self._bic(ll, Xo.shape[0]))


def select_k(X, k_range=range(1, 9), **params):
    """Fit one :class:`ProfileMixture` per K and keep the lowest BIC.

    K values with fewer observed days than components are skipped; ties go
    to the smaller K.
    """
    best = None
    table = {}
    for k in sorted(set(k_range)):
        try:
            model = ProfileMixture(n_components=k, **params).fit(X)
        except InsufficientData as exc:
            logger.info("skipping K=%d: %s", k, exc)
            continue
        table[k] = model.fit_report_.bic
        if best is None or model.fit_report_.bic < best.fit_report_.bic:
            best = model
    if best is None:
        raise InsufficientData(f"no K in {sorted(set(k_range))} could be fitted")
    best.fit_report_.bic_by_k = table
    return best, best.fit_report_


@dataclass
class ProfilePosterior:
    date: object
    probs: object
    fully_missing: bool


def posterior_profiles(series, model):
    """Per-day :class:`ProfilePosterior` for a :class:`PatientSeries`."""
    P = model.predict_proba(series.to_matrix())
    return [ProfilePosterior(d, None, True) if np.isnan(p).all()
            else ProfilePosterior(d, p, False)
            for d, p in zip(series.dates, P)]


def model_to_dict(model):
    check_is_fitted(model, "params_")
    p = model.params_
    return {
        "format_version": FORMAT_VERSION,
        "n_components": p.n_components,
        "n_real": model.n_real,
        "weights": p.weights.tolist(),
        "means": p.means.tolist(),
        "variances": p.variances.tolist(),
        "bernoulli": p.bernoulli.tolist(),
        "fit_report": model.fit_report_.as_dict(),
        "estimator_params": model.get_params(),
    }


def model_from_dict(data):
    if data.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {data.get('format_version')!r}")
    kwargs = dict(data.get("estimator_params", {}))
    kwargs.update(n_components=data["n_components"], n_real=data["n_real"])
    model = ProfileMixture(**kwargs)
    model.params_ = MixtureParams(*(np.array(data[k], dtype=np.float64) for k in
                                    ("weights", "means", "variances", "bernoulli")))
    model.n_features_in_ = model.params_.n_real + model.params_.bernoulli.shape[1]
    rep = data.get("fit_report", {})
    model.fit_report_ = FitReport(
        log_likelihood=rep.get("log_likelihood", np.nan),
        iterations=rep.get("iterations", 0), restarts=rep.get("restarts", 0),
        bic=rep.get("bic", np.nan), converged=rep.get("converged", False),
        n_components=data["n_components"], seed=rep.get("seed"),
        best_restart=rep.get("best_restart", 0),
        bic_by_k={int(k): v for k, v in rep.get("bic_by_k", {}).items()})
    model.log_likelihood_ = model.fit_report_.log_likelihood
    return model


def save_model(model, stream):
    json.dump(model_to_dict(model), stream, indent=1)
    stream.write("\n")


def load_model(stream):
    return model_from_dict(json.load(stream))
