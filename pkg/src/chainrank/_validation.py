"""Small input-validation helpers used at public API boundaries."""

import math

import numpy as np

from .exceptions import InvalidInputError


def check_vector(values, name="values", min_length=1):
    """Return ``values`` as a finite 1-D float64 array or raise InvalidInputError."""
    try:
        arr = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name}: not numeric ({exc})") from None
    if arr.ndim != 1:
        raise InvalidInputError(f"{name}: expected a 1-D sequence, got shape {arr.shape}")
    if arr.shape[0] < min_length:
        raise InvalidInputError(f"{name}: need at least {min_length} entries, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: contains non-finite entries")
    return arr


def check_scalar(value, name, *, positive=False, non_negative=False):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidInputError(f"{name}: not a number") from None
    if not math.isfinite(value):
        raise InvalidInputError(f"{name}: must be finite")
    if positive and value <= 0:
        raise InvalidInputError(f"{name}: must be > 0, got {value}")
    if non_negative and value < 0:
        raise InvalidInputError(f"{name}: must be >= 0, got {value}")
    return value


def check_tokens(tokens, vocab_size, name="tokens"):
    arr = np.asarray(tokens)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise InvalidInputError(f"{name}: expected a non-empty 1-D token sequence")
    if not np.issubdtype(arr.dtype, np.integer):
        raise InvalidInputError(f"{name}: token ids must be integers")
    if arr.min() < 0 or arr.max() >= vocab_size:
        raise InvalidInputError(f"{name}: token id out of range [0, {vocab_size})")
    return arr.astype(np.int64)
