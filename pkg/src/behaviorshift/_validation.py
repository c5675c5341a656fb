"""Input validation helpers used by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import EmptySeries


def check_feature_matrix(X, n_real):
    """Validate a day-by-feature matrix where NaN marks a missing entry.

    Returns the float64 array and the boolean ``observed`` mask.
    """
    X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan",
                    ensure_min_samples=1, copy=False)
    if not 0 <= n_real <= X.shape[1]:
        raise ValueError(f"n_real={n_real} incompatible with {X.shape[1]} columns")
    observed = ~np.isnan(X)
    binary = X[:, n_real:][observed[:, n_real:]]
    if binary.size and not np.isin(binary, (0.0, 1.0)).all():
        raise ValueError("binary columns must hold 0, 1 or NaN")
    return X, observed


def observed_rows(observed):
    """Boolean mask of days that are not fully missing."""
    rows = observed.any(axis=1)
    if not rows.any():
        raise EmptySeries("every day is fully missing")
    return rows


def check_simplex(probs, atol=1e-9):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("probability vector must be 1-D and non-empty")
    if (probs < 0).any() or abs(probs.sum() - 1.0) > atol:
        raise ValueError(f"not a probability vector: {probs}")
    return probs


def check_probability_rows(P):
    """Validate an (n_days, K) matrix of per-day profile posteriors.

    Rows of NaN mark fully missing days.
    """
    P = check_array(P, dtype=np.float64, ensure_all_finite="allow-nan",
                    ensure_min_samples=1)
    missing = np.isnan(P).all(axis=1)
    body = P[~missing]
    if np.isnan(body).any():
        raise ValueError("posterior rows must be fully NaN or fully finite")
    if body.size and ((body < 0).any() or
                      np.abs(body.sum(axis=1) - 1.0).max() > 1e-9):
        raise ValueError("posterior rows must lie on the simplex")
    return P, missing
