"""Input checks shared by the estimators and the functional API."""

from __future__ import annotations

import numbers

import numpy as np

from .errors import ValidationError
from .model import ProblemSpec


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValidationError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_spec(spec) -> ProblemSpec:
    if not isinstance(spec, ProblemSpec):
        raise ValidationError(f"expected a ProblemSpec, got {type(spec).__name__}")
    return spec


def check_eigenvalues(target, allow_empty: bool = False) -> np.ndarray:
    """Complex 1-d array of finite eigenvalues from a Spectrum or array-like."""
    values = getattr(target, "eigenvalues", target)
    try:
        arr = np.asarray(values, dtype=complex).ravel()
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"eigenvalues must be numeric: {exc}") from None
    if arr.size == 0 and not allow_empty:
        raise ValidationError("no eigenvalues given")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("eigenvalues must be finite")
    return arr


def check_lambda_grid(lams) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(lams, dtype=complex))
    if not np.all(np.isfinite(arr)):
        raise ValidationError("spectral parameters must be finite")
    return arr
