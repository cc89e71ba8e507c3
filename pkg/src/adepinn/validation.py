"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import InvalidInputError


def check_points(X, n_cols, name="X"):
    """2-D float array with ``n_cols`` columns and finite entries."""
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True)
    except ValueError as exc:
        raise InvalidInputError(f"{name}: {exc}") from exc
    if X.shape[1] != n_cols:
        raise InvalidInputError(f"{name} must have {n_cols} columns, got {X.shape[1]}")
    return X


def check_layers(hidden_layers):
    layers = tuple(int(h) for h in np.atleast_1d(hidden_layers))
    if not layers or min(layers) < 1:
        raise InvalidInputError("hidden_layers must be a non-empty tuple of positive ints")
    return layers


def check_positive(value, name):
    if not (np.isfinite(value) and value > 0):
        raise InvalidInputError(f"{name} must be a positive finite number, got {value}")
    return float(value)
