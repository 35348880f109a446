"""Input checks shared by the estimators and functions."""

from __future__ import annotations

import numbers

import numpy as np

from .errors import DimensionMismatch, EmptyDataset, ValidationError


def as_matrix(X, name: str = "X", allow_empty_columns: bool = True) -> np.ndarray:
    """Return ``X`` as a finite 2-D float array with at least one row."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
    if X.ndim != 2:
        raise DimensionMismatch(f"{name}: expected a 2-D array, got shape {X.shape}")
    if X.shape[0] == 0:
        raise EmptyDataset(f"{name}: no rows")
    if X.shape[1] == 0 and not allow_empty_columns:
        raise DimensionMismatch(f"{name}: no columns")
    if not np.isfinite(X).all():
        raise ValidationError(f"{name}: contains missing or non-finite values")
    return X


def as_label_vector(y, n_rows=None, name: str = "y") -> np.ndarray:
    """Return binary labels as a float vector of 0s and 1s."""
    y = np.asarray(y, dtype=float).ravel()
    if n_rows is not None and y.shape[0] != n_rows:
        raise DimensionMismatch(f"{name}: {y.shape[0]} labels for {n_rows} rows")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError(f"{name}: labels must be 0 or 1")
    return y


def check_same_width(got: int, expected: int, name: str) -> None:
    if got != expected:
        raise DimensionMismatch(f"{name}: expected {expected} columns, got {got}")


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_nonnegative(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValidationError(f"{name} must be a finite number >= 0, got {value!r}")
    return float(value)


def check_fraction(value, name: str, low_open: bool = True) -> float:
    ok = isinstance(value, numbers.Real) and (0 < value <= 1 if low_open else 0 <= value <= 1)
    if not ok:
        raise ValidationError(f"{name} must lie in {'(0, 1]' if low_open else '[0, 1]'}, got {value!r}")
    return float(value)


def make_rng(seed) -> np.random.Generator:
    """A numpy Generator from an int, a sequence of ints, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
