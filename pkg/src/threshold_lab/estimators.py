"""scikit-learn style wrappers.

A family is passed as a binary incidence matrix ``X`` of shape
``(n_sets, N)``: row ``i`` marks the elements of member ``i``.  This lets the
solvers sit inside pipelines, ``clone`` and ``get_params`` like any other
estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cover import cover_cost, q_value
from .measures import DEFAULT_TOL, p_critical, p_expectation
from .setfam import MAX_GROUND, Family, contains_member


def check_incidence(X, n_features=None) -> np.ndarray:
    """Validate a 0/1 incidence matrix and return it as a boolean array."""
    X = check_array(X, dtype=None, ensure_min_samples=0, ensure_all_finite=True)
    if X.size and not np.isin(X, (0, 1)).all():
        raise ValueError("incidence matrix must contain only 0 and 1")
    if X.shape[1] > MAX_GROUND:
        raise ValueError(f"at most {MAX_GROUND} ground elements are supported, got {X.shape[1]}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} columns, expected {n_features}")
    return X.astype(bool)


def incidence_to_masks(X: np.ndarray) -> np.ndarray:
    weights = np.left_shift(np.uint64(1), np.arange(X.shape[1], dtype=np.uint64))
    return np.bitwise_or.reduce(np.where(X, weights, np.uint64(0)), axis=1) if X.shape[1] \
        else np.zeros(X.shape[0], dtype=np.uint64)


def family_from_incidence(X) -> Family:
    X = check_incidence(X)
    return Family(X.shape[1], tuple(int(m) for m in incidence_to_masks(X)))


def family_to_incidence(F: Family) -> np.ndarray:
    out = np.zeros((len(F), F.ground_size), dtype=np.int8)
    for i, S in enumerate(F.sets()):
        out[i, S] = 1
    return out


class ThresholdEstimator(BaseEstimator):
    """Fit ``p_E``, ``q`` and ``p_c`` of the family given by ``X``.

    Attributes ``p_E_``, ``q_``, ``p_c_`` are floats (``nan`` when
    undefined); ``report_`` keeps the status flags.
    """

    def __init__(self, tol=DEFAULT_TOL, compute_q=True):
        self.tol = tol
        self.compute_q = compute_q

    def fit(self, X, y=None):
        self.family_ = family_from_incidence(X)
        self.n_features_in_ = self.family_.ground_size
        F = self.family_
        self.p_E_info_ = p_expectation(F, self.tol)
        self.p_c_info_ = p_critical(F, self.tol)
        self.q_info_ = q_value(F, self.tol).q if self.compute_q else None
        self.p_E_ = _value(self.p_E_info_)
        self.p_c_ = _value(self.p_c_info_)
        self.q_ = _value(self.q_info_)
        return self

    def thresholds(self) -> dict:
        check_is_fitted(self, "family_")
        return {"p_E": self.p_E_, "q": self.q_, "p_c": self.p_c_}


def _value(t) -> float:
    return float("nan") if t is None or t.value is None else t.value


class UpClosureClassifier(ClassifierMixin, BaseEstimator):
    """Predict whether each row of ``T`` lies in the up-closure of the fitted family."""

    def fit(self, X, y=None):
        self.family_ = family_from_incidence(X)
        self.n_features_in_ = self.family_.ground_size
        self.classes_ = np.array([False, True])
        return self

    def predict(self, T):
        check_is_fitted(self, "family_")
        T = check_incidence(T, self.n_features_in_)
        return contains_member(self.family_, incidence_to_masks(T))


class CoverCostEstimator(BaseEstimator):
    """Minimum-expectation cover of the family ``X`` at probability ``p``."""

    def __init__(self, p=0.5):
        self.p = p

    def fit(self, X, y=None):
        F = family_from_incidence(X)
        self.n_features_in_ = F.ground_size
        self.solution_ = cover_cost(F, self.p)
        self.cost_ = self.solution_.cost
        self.cover_ = family_to_incidence(self.solution_.cover)
        return self

    def transform(self, X):
        """Cover cost of each single-member family, one value per row."""
        check_is_fitted(self, "solution_")
        X = check_incidence(X, self.n_features_in_)
        return np.array([self.p ** int(row.sum()) for row in X])
