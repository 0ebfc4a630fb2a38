"""Input validation helpers shared by the estimator and pipeline code."""

from __future__ import annotations

import numpy as np


def check_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2-d float64 array with finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_vector(x, name: str = "x", length: int | None = None) -> np.ndarray:
    """Coerce to a 1-d float64 array, optionally enforcing a length."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {x.shape}")
    if length is not None and x.shape[0] != length:
        raise ValueError(f"{name} has length {x.shape[0]}, expected {length}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_binary_labels(y, n: int | None = None) -> np.ndarray:
    """Coerce labels to a float64 vector of 0/1 values."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError(f"y must be 1-dimensional, got shape {y.shape}")
    if n is not None and y.shape[0] != n:
        raise ValueError(f"X and y have inconsistent lengths: {n} vs {y.shape[0]}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("y must contain only 0/1 labels")
    return y


def check_fitted(obj, attr: str) -> None:
    """Raise if an estimator attribute set by fit() is missing."""
    if getattr(obj, attr, None) is None:
        raise ValueError(
            f"{type(obj).__name__} is not fitted yet; call fit() before using this method"
        )
