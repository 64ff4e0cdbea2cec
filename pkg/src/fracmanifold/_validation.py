"""Input validation helpers shared by the public entry points."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import DomainError, InvalidInputError


def check_order(p, *, allow_one: bool = False) -> float:
    """Return ``p`` as a float after checking ``0 < p < 1`` (or ``<= 1``)."""
    if isinstance(p, bool) or not isinstance(p, numbers.Real):
        raise InvalidInputError(f"order p must be a real number, got {p!r}")
    p = float(p)
    upper_ok = p <= 1.0 if allow_one else p < 1.0
    if not (np.isfinite(p) and p > 0.0 and upper_ok):
        bound = "(0, 1]" if allow_one else "(0, 1)"
        raise InvalidInputError(f"order p must lie in {bound}, got {p}")
    return p


def check_positive(value, name: str, *, strict: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise InvalidInputError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value) or value < 0.0 or (strict and value == 0.0):
        sign = "> 0" if strict else ">= 0"
        raise InvalidInputError(f"{name} must be finite and {sign}, got {value}")
    return value


def check_int(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidInputError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InvalidInputError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_complex(z, name: str = "z") -> complex:
    """Coerce a scalar to ``complex`` and reject NaN/Inf."""
    try:
        z = complex(z)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} must be a complex scalar, got {z!r}") from exc
    if not (np.isfinite(z.real) and np.isfinite(z.imag)):
        raise DomainError(f"{name} must be finite, got {z}")
    return z


def check_square(matrix, name: str) -> np.ndarray:
    arr = np.asarray(matrix)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_vector(vec, n: int, name: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=float if np.isrealobj(vec) else complex)
    if arr.shape != (n,):
        raise InvalidInputError(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr
