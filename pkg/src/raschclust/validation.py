"""Input validation helpers shared by the estimators and the CLI."""

import numpy as np

from .data import ResponseMatrix
from .errors import DataError


def as_response_matrix(X) -> ResponseMatrix:
    """Coerce an array-like or ResponseMatrix into a validated ResponseMatrix."""
    if isinstance(X, ResponseMatrix):
        return X
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D response matrix, got ndim={arr.ndim}")
    if arr.dtype.kind == "f":
        rounded = np.rint(arr)
        if not np.allclose(arr, rounded, atol=0, rtol=0):
            raise DataError("response matrix has non-integer cells")
        arr = rounded.astype(int)
    return ResponseMatrix(arr)


def check_labels(labels, n: int, name="labels") -> np.ndarray:
    """A length-n integer label vector (any label alphabet)."""
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise DataError(f"{name} must be a length-{n} vector, got shape {arr.shape}")
    if arr.dtype.kind not in "iu":
        raise DataError(f"{name} must be integer-valued")
    return arr
