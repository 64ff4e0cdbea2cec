"""Mittag-Leffler functions of Jordan-form matrices.

Every matrix function of a Jordan block is upper-triangular Toeplitz, so a
block is stored by its first row.  Entry ``m`` of ``E_{p,beta}(t^p J)`` is
``(1/m!) d^m/dlambda^m E_{p,beta}(t^p lambda)``.

For unstable blocks ``E_{p,p}(t^p J) = t^-p B~(t) + C~(t)`` where ``B~`` holds
the exponentially growing part.  ``build_C_tilde`` is the truncated
algebraic model of ``C~``; ``residual_C`` evaluates ``C~`` itself without
forming the difference of two huge numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_complex, check_int, check_order, check_positive
from .exceptions import DomainError, InvalidInputError, SectorError
from .jordan import JordanBlock, JordanSystem
from .mittag_leffler import (
    _principal_power,
    _rgamma_snapped,
    exp_root_coefficients,
    exp_root_derivative,
    ml_derivatives,
    ml_remainder_derivatives,
    reciprocal_gamma,
)
from .spectral import STABLE, UNSTABLE

__all__ = [
    "JordanBlock",
    "JordanSystem",
    "MLDecomposition",
    "psi_tilde",
    "psi",
    "scaled_psi_tilde_neg",
    "delta_tilde",
    "toeplitz_upper",
    "build_B_tilde",
    "build_C_tilde",
    "build_B",
    "decompose",
    "matrix_ml_eval",
    "matrix_ml_rows",
    "remainder_rows",
    "residual_C",
    "lemma6_residual",
]

DELTA_FORMS = ("expansion", "one_param_derivative")


def _require_unstable(lam: complex, p: float) -> None:
    if lam == 0:
        raise DomainError("lambda must be non-zero")
    if abs(math.atan2(lam.imag, lam.real)) > p * math.pi / 2:
        raise SectorError(f"lambda={lam} is stable for p={p}; this entry exists only for unstable blocks")


def psi_tilde(p: float, t, lam, m: int):
    """``(1/m!) d^(m+1)/dlambda^(m+1) exp(t lambda^(1/p))``."""
    p = check_order(p, allow_one=True)
    lam = check_complex(lam, "lambda")
    m = check_int(m, "m", 0)
    _require_unstable(lam, p)
    return exp_root_derivative(p, t, lam, m + 1) / math.factorial(m)


def psi(p: float, t, lam, m: int):
    """``(1/m!) d^m/dlambda^m [(1/p) exp(t lambda^(1/p))]``."""
    p = check_order(p, allow_one=True)
    lam = check_complex(lam, "lambda")
    m = check_int(m, "m", 0)
    _require_unstable(lam, p)
    return exp_root_derivative(p, t, lam, m) / (math.factorial(m) * p)


def scaled_psi_tilde_neg(p: float, s, lam, m: int):
    """``(p/s) psi_tilde(-s)`` written so that ``s = 0`` is a regular point.

    The closed form of ``psi_tilde`` carries a factor ``t`` in every term,
    which cancels the ``1/s``; at ``s = 0`` the value is
    ``-lambda^(1/p - 1)`` for ``m = 0``.
    """
    p = check_order(p, allow_one=True)
    lam = check_complex(lam, "lambda")
    m = check_int(m, "m", 0)
    _require_unstable(lam, p)
    s = np.asarray(s, dtype=float)
    coeffs = exp_root_coefficients(p, m + 1)
    mu = _principal_power(lam, 1.0 / p)
    acc = np.zeros(s.shape, dtype=complex)
    for i, c in enumerate(coeffs, start=1):
        acc = acc + c * (-1.0) ** i * s ** (i - 1) * _principal_power(lam, i / p - m - 1)
    out = p / math.factorial(m) * acc * np.exp(-s * mu)
    return out.item() if out.ndim == 0 else out


def delta_tilde(p: float, t: float, lam, m: int, q: int, form: str = "expansion") -> complex:
    """Truncated algebraic entry ``m`` of ``C~(t)``.

    ``form="expansion"`` differentiates the ``q`` algebraic terms of the
    sector expansion of ``E_{p,p}(t^p lambda)`` ``m`` times in ``lambda``:

        -(1/m!) sum_{k=1..q} (-1)^m (k+m-1)!/(k-1)! lambda^(-k-m) t^(-pk) / Gamma(p - pk)

    ``form="one_param_derivative"`` is the sum

        (1/m!) sum_{k=2..q} (-1)^(m+2) (k+m)!/(k-1)! lambda^(-k-m-1) t^(-pk) / Gamma(1 - pk),

    which is ``(1/m!) d^(m+1)/dlambda^(m+1)`` of the algebraic tail of
    ``E_p(t^p lambda)`` with its ``k = 1`` term removed.  Its residual
    against ``E_{p,p}`` decays only like ``t^-p``; it is kept for
    comparison.
    """
    p = check_order(p, allow_one=True)
    t = check_positive(t, "t")
    lam = check_complex(lam, "lambda")
    m = check_int(m, "m", 0)
    q = check_int(q, "q", 2)
    if lam == 0:
        raise DomainError("lambda must be non-zero")
    if form not in DELTA_FORMS:
        raise InvalidInputError(f"form must be one of {DELTA_FORMS}, got {form!r}")
    total = 0j
    if form == "expansion":
        for k in range(1, q + 1):
            rg = _rgamma_snapped(p - p * k)
            if rg:
                comb = math.factorial(k + m - 1) // math.factorial(k - 1)
                total += -((-1) ** m) * comb * lam ** (-k - m) * t ** (-p * k) * rg
    else:
        for k in range(2, q + 1):
            rg = _rgamma_snapped(1 - p * k)
            if rg:
                comb = math.factorial(k + m) // math.factorial(k - 1)
                total += (-1) ** (m + 2) * comb * lam ** (-k - m - 1) * t ** (-p * k) * rg
    return total / math.factorial(m)


# ---------------------------------------------------------------------------
# block assembly


def toeplitz_upper(row) -> np.ndarray:
    """Upper-triangular Toeplitz matrix with the given first row."""
    row = np.asarray(row)
    n = row.shape[-1]
    out = np.zeros(row.shape[:-1] + (n, n), dtype=np.result_type(row.dtype, float))
    for k in range(n):
        idx = np.arange(n - k)
        out[..., idx, idx + k] = row[..., k : k + 1]
    return out


def _blockdiag(system: JordanSystem, rows: list) -> np.ndarray:
    """Block-diagonal matrix (or stack over a leading axis) from first rows."""
    lead = np.asarray(rows[0]).shape[:-1]
    n = system.dimension
    out = np.zeros(lead + (n, n), dtype=complex)
    for row, b, lo in zip(rows, system.blocks, system.offsets):
        out[..., lo : lo + b.size, lo : lo + b.size] = toeplitz_upper(row)
    return out


def _unstable_rows(system: JordanSystem, fn) -> list:
    return [
        np.array([fn(b.lam, m) for m in range(b.size)], dtype=complex)
        if b.klass == UNSTABLE
        else np.zeros(b.size, dtype=complex)
        for b in system.blocks
    ]


def build_B_tilde(system: JordanSystem, t: float) -> np.ndarray:
    """``B~(t)`` in the Jordan basis; stable blocks are zero."""
    t = float(t)
    if t == 0.0:
        raise InvalidInputError("B~(t) is defined for t != 0")
    return _blockdiag(system, _unstable_rows(system, lambda lam, m: psi_tilde(system.p, t, lam, m)))


def build_B(system: JordanSystem, t: float) -> np.ndarray:
    """``B(t)`` in the Jordan basis, entries ``psi``; stable blocks are zero."""
    t = float(t)
    if t == 0.0:
        raise InvalidInputError("B(t) is defined for t != 0")
    return _blockdiag(system, _unstable_rows(system, lambda lam, m: psi(system.p, t, lam, m)))


def build_C_tilde(system: JordanSystem, t: float, q: int, form: str = "expansion") -> np.ndarray:
    """Truncated algebraic part ``C~(t)`` in the Jordan basis."""
    t = check_positive(t, "t")
    rows = [
        np.array([delta_tilde(system.p, t, b.lam, m, q, form) for m in range(b.size)])
        for b in system.blocks
    ]
    return _blockdiag(system, rows)


@dataclass(frozen=True)
class MLDecomposition:
    t: float
    q: int
    B_tilde: np.ndarray
    C_tilde: np.ndarray
    B: np.ndarray


def decompose(system: JordanSystem, t: float, q: int, form: str = "expansion") -> MLDecomposition:
    return MLDecomposition(
        float(t), q, build_B_tilde(system, t), build_C_tilde(system, t, q, form), build_B(system, t)
    )


# ---------------------------------------------------------------------------
# exact matrix functions


def matrix_ml_rows(system: JordanSystem, beta: float, times, *, stable_only: bool = False) -> list:
    """First rows of ``E_{p,beta}(t^p J_j)`` for every block and every time.

    Returns one array of shape ``(len(times), n_j)`` per block; with
    ``stable_only`` the unstable entries are ``None`` (their exponential
    growth can overflow on long grids).
    """
    p = system.p
    beta = check_positive(beta, "beta")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise InvalidInputError("times must be >= 0")
    rows = []
    tp = times**p
    for b in system.blocks:
        if stable_only and b.klass != STABLE:
            rows.append(None)
            continue
        D = ml_derivatives(tp * b.lam, p, beta, b.size - 1)
        scale = tp[None, :] ** np.arange(b.size)[:, None]
        rows.append((D * scale).T)
    return rows


def remainder_rows(system: JordanSystem, beta: float, times) -> list[np.ndarray]:
    """Like :func:`matrix_ml_rows` but with the exponential part removed from
    the unstable blocks (stable blocks are returned in full).

    For ``beta = p`` the unstable rows are those of ``C~(t)``; for
    ``beta = 1`` they are those of ``E_p(t^p J) - B(t)``.
    """
    p = system.p
    beta = check_positive(beta, "beta")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise InvalidInputError("times must be >= 0")
    gamma_exp = (1.0 - beta) / p
    full = matrix_ml_rows(system, beta, times, stable_only=True)
    rows = []
    tp = times**p
    for b, row in zip(system.blocks, full):
        if b.klass == STABLE:
            rows.append(row)
            continue
        out = np.zeros((times.size, b.size), dtype=complex)
        pos = times > 0
        R = ml_remainder_derivatives(tp[pos] * b.lam, p, beta, b.size - 1)
        scale = tp[pos][None, :] ** np.arange(b.size)[:, None]
        out[pos] = (R * scale).T
        if (~pos).any():
            # limit t -> 0: only m = 0 survives
            if gamma_exp > 0:
                exp0 = 0.0
            elif gamma_exp == 0:
                exp0 = 1.0 / p
            else:
                raise DomainError("remainder at t = 0 needs beta <= 1")
            out[~pos, 0] = reciprocal_gamma(beta) - exp0
        rows.append(out)
    return rows


def matrix_ml_eval(system: JordanSystem, beta: float, t: float) -> np.ndarray:
    """``E_{p,beta}(t^p A) = P blockdiag(E_{p,beta}(t^p J_j)) P^-1``."""
    t = check_positive(t, "t", strict=False)
    rows = [r[0] for r in matrix_ml_rows(system, beta, [t])]
    return system.conjugate(_blockdiag(system, rows))


def residual_C(system: JordanSystem, t: float) -> np.ndarray:
    """``E_{p,p}(t^p J) - t^-p B~(t)`` in the Jordan basis, evaluated through
    the integral form of the remainder on unstable blocks."""
    t = check_positive(t, "t")
    rows = [r[0] for r in remainder_rows(system, system.p, [t])]
    return _blockdiag(system, rows)


def lemma6_residual(system: JordanSystem, t: float, tau: float) -> float:
    """Max-norm of ``(t - tau) B(t) B~(-tau) + (tau/p) B~(t - tau)``."""
    t = check_positive(t, "t")
    tau = check_positive(tau, "tau")
    if t == tau:
        raise InvalidInputError("t and tau must differ")
    lhs = (t - tau) * build_B(system, t) @ build_B_tilde(system, -tau)
    rhs = -(tau / system.p) * build_B_tilde(system, t - tau)
    return float(np.max(np.abs(lhs - rhs)))
