"""Argument checks shared by the estimator API and the CLI."""

import numbers

import numpy as np
from sklearn.utils import check_consistent_length, column_or_1d

from .bootstrap import METHODS, MIN_B
from .exceptions import DomainError, InputError
from .experiment import validate_observed


def check_alpha(alpha):
    if isinstance(alpha, bool) or not isinstance(alpha, numbers.Real) or not 0 < alpha < 1:
        raise DomainError(f"alpha must be a real number in (0, 1), got {alpha!r}")
    return float(alpha)


def check_n_bootstrap(B):
    if isinstance(B, bool) or not isinstance(B, numbers.Integral) or B < MIN_B:
        raise DomainError(f"the number of bootstrap replicates must be an integer >= {MIN_B}, got {B!r}")
    return int(B)


def check_method(method):
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return method


def check_seed(random_state):
    """Integer seed from ``None``, an int or a numpy ``Generator``."""
    if random_state is None:
        return None
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(0, 2**63 - 1))
    if isinstance(random_state, numbers.Integral) and not isinstance(random_state, bool):
        if random_state < 0:
            raise DomainError("seed must be non-negative")
        return int(random_state)
    raise DomainError(f"random_state must be None, an int or a numpy Generator, got {random_state!r}")


def split_design_matrix(X):
    """``(stratum, z)`` from a two-column array or a frame with those column names."""
    cols = getattr(X, "columns", None)
    if cols is not None and {"stratum", "z"} <= set(cols):
        return np.asarray(X["stratum"]), np.asarray(X["z"])
    arr = np.asarray(X, dtype=object)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError(f"X must have two columns (stratum, z), got shape {arr.shape}")
    return arr[:, 0], arr[:, 1].astype(float)


def check_experiment(X, y):
    """Validate ``X = (stratum, z)`` and outcomes ``y``; return an ObservedExperiment."""
    stratum, z = split_design_matrix(X)
    try:
        y = column_or_1d(np.asarray(y, dtype=float))
        check_consistent_length(stratum, z, y)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return validate_observed(stratum, z, y)
