"""Mittag-Leffler functions of complex argument and their eigenvalue derivatives.

Everything here works on the normalised derivatives

.. math::

    D_m(z) = \\frac{1}{m!} \\frac{d^m}{dz^m} E_{p,\\beta}(z),

so that the Jordan-block entries ``(1/m!) d^m/dlambda^m E(t^p lambda)`` are
``t^(p m) D_m(t^p lambda)``.  Three evaluation routes exist:

* the power series (term recursion plus compensated summation),
* the sector asymptotic expansion, with either a fixed truncation order ``q``
  or optimal truncation,
* for the algebraic remainder ``E - (exponential part)`` a real-line integral
  representation, which stays accurate where the exponential part is huge.

The hybrid dispatcher picks, point by point, the branch with the smaller
error estimate unless an explicit switch radius is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import log_ndtr, poch, rgamma

from ._validation import check_complex, check_int, check_order, check_positive
from .exceptions import DomainError, InvalidInputError, NonConvergence, NumericalFailure, SectorError

EPS = float(np.finfo(float).eps)
MAX_SERIES_TERMS = 2000
# series is only attempted while the largest term stays below ~exp(60)
_SERIES_EXPONENT_CAP = 60.0
_MAX_ASYMPTOTIC_TERMS = 400
# fall back to the integral representation when neither branch reaches this
_INTEGRAL_TRIGGER = 1e-13
_INTEGRAL_TOL = 1e-13
_BOUNDARY_GAP = 1e-3
# within this fraction of p*pi from the Stokes ray the remainder integral runs
# along arg(chi) = _TILT * p * pi instead of the real axis
_STOKES_WINDOW = 0.125
_TILT = 0.25


@dataclass(frozen=True)
class MLParams:
    """Parameters of :math:`E_{p,\\beta}` evaluation.

    ``switch_radius=None`` selects the branch per point from error
    estimates; a number forces ``|z| <= switch_radius`` onto the series.
    ``q`` is the truncation order of the fixed-order asymptotic expansions.
    """

    p: float
    beta: float = 1.0
    q: int = 3
    series_tol: float = 1e-16
    switch_radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", check_order(self.p, allow_one=True))
        object.__setattr__(self, "beta", check_positive(self.beta, "beta"))
        object.__setattr__(self, "q", check_int(self.q, "q", 2))
        tol = check_positive(self.series_tol, "series_tol")
        if tol >= 1.0:
            raise InvalidInputError(f"series_tol must lie in (0, 1), got {tol}")
        if self.switch_radius is not None:
            object.__setattr__(
                self, "switch_radius", check_positive(self.switch_radius, "switch_radius")
            )

    def with_beta(self, beta: float) -> MLParams:
        return MLParams(self.p, beta, self.q, self.series_tol, self.switch_radius)


@dataclass(frozen=True)
class BranchValues:
    """Series and asymptotic values at one point, plus the dispatcher's pick
    (``series``, ``asymptotic``, ``integral`` or ``recurrence``) and its value."""

    series: complex | None
    series_error: float
    asymptotic: complex | None
    asymptotic_error: float
    chosen: str
    value: complex


def reciprocal_gamma(z):
    """``1/Gamma(z)``, exactly zero at the poles ``z = 0, -1, -2, ...``."""
    arr = np.asarray(z)
    out = rgamma(arr)
    return out.item() if out.ndim == 0 else out


def _principal_power(lam: complex, exponent: float) -> complex:
    lam = complex(lam)
    if lam.imag == 0.0 and lam.real > 0.0:
        return complex(lam.real**exponent)
    return lam**exponent


def _sector_angle(p: float) -> float:
    return min(math.pi, p * math.pi)


# ---------------------------------------------------------------------------
# derivatives of exp(t * lambda^(1/p))


@lru_cache(maxsize=None)
def _exp_root_table(p: float, m: int) -> tuple[Fraction, ...]:
    inv_p = 1 / Fraction(p)
    row = {1: inv_p}
    for level in range(1, m):
        nxt = {}
        for i in range(1, level + 2):
            val = row.get(i, Fraction(0)) * (i * inv_p - level)
            val += row.get(i - 1, Fraction(0)) * inv_p
            if val:
                nxt[i] = val
        row = nxt
    return tuple(row.get(i, Fraction(0)) for i in range(1, m + 1))


def exp_root_coefficients(p: float, m: int) -> np.ndarray:
    """Coefficients ``c[m, i]`` (``i = 1..m``) of the closed form of
    ``d^m/dlambda^m exp(t lambda^(1/p))``; entry ``i-1`` multiplies
    ``t^i lambda^(i/p - m) exp(t lambda^(1/p))``."""
    p = check_order(p, allow_one=True)
    m = check_int(m, "m", 1)
    return np.array([float(c) for c in _exp_root_table(p, m)])


def exp_root_derivative(p: float, t, lam, m: int):
    """``d^m/dlambda^m exp(t * lambda^(1/p))`` on the principal branch.

    ``t`` may be negative and may be an array.
    """
    p = check_order(p, allow_one=True)
    m = check_int(m, "m", 0)
    lam = check_complex(lam, "lambda")
    if lam == 0:
        raise DomainError("exp_root_derivative needs lambda != 0")
    t_arr = np.asarray(t, dtype=float)
    mu = _principal_power(lam, 1.0 / p)
    base = np.exp(t_arr * mu)
    if m == 0:
        out = base
    else:
        coeffs = exp_root_coefficients(p, m)
        out = np.zeros(t_arr.shape, dtype=complex)
        for i, c in enumerate(coeffs, start=1):
            out = out + c * t_arr**i * _principal_power(lam, i / p - m)
        out = out * base
    return out.item() if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _exp_part_table(p: float, beta: float, m: int) -> tuple[tuple[int, float], ...]:
    # d^m/dz^m [z^g exp(z^(1/p))] = sum_i d[i] z^(g + i/p - m) exp(z^(1/p))
    inv_p = 1 / Fraction(p)
    g = (1 - Fraction(beta)) * inv_p
    row = {0: Fraction(1)}
    for level in range(m):
        nxt: dict[int, Fraction] = {}
        for i, c in row.items():
            nxt[i] = nxt.get(i, Fraction(0)) + c * (g + i * inv_p - level)
            nxt[i + 1] = nxt.get(i + 1, Fraction(0)) + c * inv_p
        row = {i: c for i, c in nxt.items() if c}
    scale = Fraction(1, math.factorial(m))
    return tuple((i, float(c * scale)) for i, c in sorted(row.items()))


def _exp_part(z: np.ndarray, p: float, beta: float, m: int, *, switched: bool = True) -> np.ndarray:
    """``(1/m!) d^m/dz^m [(1/p) z^((1-beta)/p) exp(z^(1/p))]``, zero outside
    the sector ``|arg z| <= min(pi, p pi)`` unless ``switched`` is off."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape, dtype=complex)
    inside = z != 0
    if switched:
        inside &= np.abs(np.angle(z)) <= _sector_angle(p) * (1 + 1e-14)
    if not inside.any():
        return out
    zi = z[inside]
    logz = np.log(zi)
    w = zi if p == 1.0 else np.exp(logz / p)
    gexp = (1.0 - beta) / p
    acc = np.zeros(zi.shape, dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        for i, c in _exp_part_table(p, beta, m):
            acc += c * np.exp(w + (gexp + i / p - m) * logz)
        out[inside] = acc / p
    return out


# ---------------------------------------------------------------------------
# series branch


def _series_derivative(z, p, beta, m, tol, max_terms=MAX_SERIES_TERMS):
    """``D_m(z)`` by the power series.  Returns ``(value, error_estimate)``."""
    z = np.asarray(z, dtype=complex)
    absz = np.abs(z)
    term = np.full(z.shape, rgamma(p * m + beta), dtype=complex)
    s_re, s_im = term.real.copy(), term.imag.copy()
    c_re, c_im = np.zeros(z.shape), np.zeros(z.shape)
    abs_sum = np.abs(term)
    weighted = abs_sum.copy()
    active = np.ones(z.shape, dtype=bool)
    for j in range(1, max_terms):
        k = m + j
        term = term * z * ((k / j) / poch(p * (k - 1) + beta, p))
        term[~active] = 0.0
        for s, c, x in ((s_re, c_re, term.real), (s_im, c_im, term.imag)):
            tot = s + x
            big = np.abs(s) >= np.abs(x)
            c += np.where(big, (s - tot) + x, (x - tot) + s)
            s[...] = tot
        mag = np.abs(term)
        abs_sum += mag
        weighted += (1 + 2 * j) * mag
        ratio = absz * (((k + 1) / (j + 1)) / poch(p * k + beta, p))
        with np.errstate(divide="ignore"):
            rem = np.where(ratio < 1, mag * ratio / (1 - ratio), np.inf)
        total = np.hypot(s_re + c_re, s_im + c_im)
        active &= ~((mag + rem) <= tol * (1 + total))
        if not active.any():
            break
    else:
        raise NonConvergence(
            f"Mittag-Leffler series did not converge within {max_terms} terms "
            f"(max |z| = {absz.max():.3g}); use the asymptotic branch"
        )
    value = (s_re + c_re) + 1j * (s_im + c_im)
    return value, EPS * weighted + tol * (1 + np.abs(value))


# ---------------------------------------------------------------------------
# asymptotic branch


def _rgamma_snapped(x: float) -> float:
    # beta - p*k can miss an exact pole by rounding; treat that as the pole
    nearest = round(x)
    if nearest <= 0 and abs(x - nearest) <= 1e-12 * max(1.0, abs(x)):
        return 0.0
    return float(rgamma(x))


def _algebraic_terms(z, p, beta, m, q):
    """Generator of ``(k, coefficient, z^(-k-m))`` for the algebraic tail."""
    zinv = 1.0 / z
    power = zinv ** (m + 1)
    for k in range(1, (q if q is not None else _MAX_ASYMPTOTIC_TERMS) + 1):
        coef = -((-1) ** m) * math.comb(k + m - 1, m) * _rgamma_snapped(beta - p * k)
        yield k, coef, power
        with np.errstate(over="ignore", invalid="ignore"):
            power = power * zinv


def _asymptotic_derivative(z, p, beta, m, q=None, *, include_exp=True):
    """``D_m(z)`` from the sector asymptotic expansion.

    With ``q`` given the algebraic sum runs over ``k = 1..q`` exactly and the
    error estimate is the first omitted non-zero term.  With ``q=None`` the
    sum is truncated optimally (before the terms start to grow).
    """
    z = np.asarray(z, dtype=complex)
    expo = _exp_part(z, p, beta, m) if include_exp else np.zeros(z.shape, complex)
    alg = np.zeros(z.shape, dtype=complex)
    err = np.zeros(z.shape)
    terminates = p == 1.0 and float(beta).is_integer()
    if q is not None:
        for _, coef, power in _algebraic_terms(z, p, beta, m, q):
            alg += coef * power
        # first omitted non-zero term
        for k in range(q + 1, q + 4):
            coef = math.comb(k + m - 1, m) * abs(_rgamma_snapped(beta - p * k))
            if coef:
                err = coef * np.abs(z) ** (-k - m)
                break
    else:
        active = np.ones(z.shape, dtype=bool)
        prev = np.full(z.shape, np.inf)
        err = np.full(z.shape, np.inf)
        for _, coef, power in _algebraic_terms(z, p, beta, m, None):
            if coef == 0.0:
                continue
            with np.errstate(over="ignore", invalid="ignore"):
                term = coef * power
            mag = np.abs(term)
            growing = active & ~(mag <= prev)
            err[growing] = prev[growing]
            active &= ~growing
            alg[active] += term[active]
            prev = np.where(active, mag, prev)
            small = active & (mag <= EPS * np.abs(alg + expo))
            err[small] = mag[small]
            active &= ~small
            if not active.any():
                break
        err[active] = prev[active]
        if terminates:
            err[:] = 0.0
    value = expo + alg
    if include_exp and p < 1.0:
        err = err + _stokes_error(z, p, beta, m)
    return value, err + 4 * EPS * (np.abs(expo) + np.abs(alg))


def _stokes_error(z, p, beta, m):
    """Size of the smoothed switch of the exponential term across the Stokes
    ray ``|arg z| = p pi``: ``|exp term| * erfc(d sqrt(x/2)) / 2`` with
    ``x = |z|^(1/p)`` and ``d`` the angular distance of ``z^(1/p)`` from
    ``pi``.  Formed in logs; the unswitched term overflows far from the ray."""
    out = np.zeros(z.shape)
    nz = z != 0
    if not nz.any():
        return out
    zi = z[nz]
    logz = np.log(zi)
    x = np.exp(logz.real / p)
    phase = np.abs(logz.imag) / p
    gexp = (1.0 - beta) / p
    poly = np.zeros(zi.shape, dtype=complex)
    for i, c in _exp_part_table(p, beta, m):
        poly += c * np.exp((gexp + i / p - m) * logz)
    with np.errstate(divide="ignore"):
        log_mag = x * np.cos(phase) + np.log(np.abs(poly) / p)
    dev = np.abs(phase - math.pi)
    # erfc(s)/2 = ndtr(-s sqrt 2)
    out[nz] = np.exp(log_mag + log_ndtr(-dev * np.sqrt(x)))
    return out


# ---------------------------------------------------------------------------
# dispatcher


def ml_derivatives(z, p: float, beta: float, m_max: int = 0, *, switch_radius=None):
    """``D_m(z)`` for ``m = 0..m_max`` as an array of shape ``(m_max+1, *z.shape)``."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros((m_max + 1,) + z.shape, dtype=complex)
    for m in range(m_max + 1):
        out[m] = _dispatch(z, p, beta, m, switch_radius)[0]
    return out


def _dispatch(z, p, beta, m, switch_radius):
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("z must be finite")
    value, err, branch = _dispatch_raw(z, p, beta, m, switch_radius)
    bad = ~np.isfinite(value)
    if bad.any():
        worst = np.asarray(z).reshape(-1)[np.flatnonzero(bad.reshape(-1))[0]]
        raise NumericalFailure(
            f"E_{{{p:g},{beta:g}}} derivative {m} overflows double precision at z = {complex(worst):.6g}"
        )
    return value, err, branch


def _dispatch_raw(z, p, beta, m, switch_radius):
    z = np.asarray(z, dtype=complex)
    absz = np.abs(z)
    flat = z.ravel()
    value = np.zeros(flat.shape, dtype=complex)
    err = np.full(flat.shape, np.inf)
    branch = np.empty(flat.shape, dtype=object)
    if switch_radius is not None:
        use_series = absz.ravel() <= switch_radius
        if use_series.any():
            v, e = _series_derivative(flat[use_series], p, beta, m, EPS)
            value[use_series], err[use_series] = v, e
            branch[use_series] = "series"
        rest = ~use_series
        if rest.any():
            v, e = _asymptotic_derivative(flat[rest], p, beta, m)
            value[rest], err[rest] = v, e
            branch[rest] = "asymptotic"
        return value.reshape(z.shape), err.reshape(z.shape), branch.reshape(z.shape)

    nonzero = flat != 0
    if nonzero.any():
        v, e = _asymptotic_derivative(flat[nonzero], p, beta, m)
        value[nonzero], err[nonzero] = v, e
        branch[nonzero] = "asymptotic"
    with np.errstate(divide="ignore"):
        feasible = np.abs(flat) ** (1.0 / p) <= _SERIES_EXPONENT_CAP
    want = feasible & (err > 4 * EPS * (np.abs(value) + 1e-300))
    if want.any():
        v, e = _series_derivative(flat[want], p, beta, m, EPS)
        better = e <= err[want]
        idx = np.flatnonzero(want)[better]
        value[idx], err[idx] = v[better], e[better]
        branch[idx] = "series"
    if p < 1.0 and beta >= 1 + p:
        poor = (err > _INTEGRAL_TRIGGER * np.abs(value)) & (flat != 0)
        if poor.any():
            v, e = _lowered_beta(flat[poor], p, beta, m)
            idx = np.flatnonzero(poor)
            better = e < err[idx]
            value[idx[better]], err[idx[better]] = v[better], e[better]
            branch[idx[better]] = "recurrence"
    if p < 1.0 and beta < 1 + p:
        angle = np.abs(np.angle(flat))
        poor = (err > _INTEGRAL_TRIGGER * np.abs(value)) & (flat != 0)
        near = poor & (np.abs(angle - p * math.pi) <= _STOKES_WINDOW * p * math.pi)
        far = poor & ~near
        if far.any():
            rem = _remainder_integral(flat[far], p, beta, m)[m]
            value[far] = _exp_part(flat[far], p, beta, m) + rem
            err[far] = _INTEGRAL_TOL * (np.abs(value[far]) + np.abs(rem))
            branch[far] = "integral"
        if near.any():
            # continue the inside-sector form across the ray: the exponential
            # stays on and the contour tilts past the pole at z e^(-i p pi)
            zn = flat[near]
            upper = zn.imag >= 0
            zu = np.where(upper, zn, zn.conjugate())
            rem = _remainder_integral(zu, p, beta, m, tilt=_TILT * p * math.pi)[m]
            val = _exp_part(zu, p, beta, m, switched=False) + rem
            value[near] = np.where(upper, val, val.conjugate())
            err[near] = _INTEGRAL_TOL * (np.abs(val) + np.abs(rem))
            branch[near] = "integral"
    return value.reshape(z.shape), err.reshape(z.shape), branch.reshape(z.shape)


def _lowered_beta(z, p, beta, m):
    """``D_m`` for ``beta >= 1 + p`` from ``E_{p,b}(z) = (E_{p,b-p}(z) - 1/Gamma(b-p)) / z``,
    applied until ``b < 1 + p`` where the dispatcher has the integral branch."""
    steps = math.ceil((beta - (1 + p)) / p + 1e-12)
    base = beta - steps * p
    levels = np.zeros((m + 1,) + z.shape, dtype=complex)
    errs = np.zeros(z.shape)
    for j in range(m + 1):
        v, e, _ = _dispatch(z, p, base, j, None)
        levels[j], errs = v, np.maximum(errs, e / np.maximum(np.abs(v), 1e-300))
    zinv = 1.0 / z
    b = base
    for _ in range(steps):
        shifted = levels.copy()
        shifted[0] -= rgamma(b)
        nxt = np.zeros_like(levels)
        # (1/m!) d^m [g/z] = sum_j D_j(g) (-1)^(m-j) z^-(m-j+1)
        for k in range(m + 1):
            for j in range(k + 1):
                nxt[k] += shifted[j] * (-1) ** (k - j) * zinv ** (k - j + 1)
        levels = nxt
        b += p
    value = levels[m]
    return value, (steps + 1) * (errs + _INTEGRAL_TOL) * np.abs(value)


def _scalar_or_array(arr, scalar_input):
    return complex(arr.reshape(-1)[0]) if scalar_input else arr


def ml_series(params: MLParams, z):
    """Power series of :math:`E_{p,\\beta}(z)`; raises :class:`NonConvergence`
    past ``MAX_SERIES_TERMS`` terms."""
    scalar = np.ndim(z) == 0
    value, _ = _series_derivative(
        np.atleast_1d(np.asarray(z, dtype=complex)), params.p, params.beta, 0, params.series_tol
    )
    return _scalar_or_array(value, scalar)


def ml_eval(params: MLParams, z):
    """Hybrid evaluation of :math:`E_{p,\\beta}(z)` (scalar or array)."""
    scalar = np.ndim(z) == 0
    value, _, _ = _dispatch(
        np.atleast_1d(np.asarray(z, dtype=complex)), params.p, params.beta, 0, params.switch_radius
    )
    return _scalar_or_array(value, scalar)


def ml_branch_values(params: MLParams, z, m: int = 0) -> BranchValues:
    """Evaluate ``D_m(z)`` on both branches where each is usable."""
    z = check_complex(z)
    arr = np.array([z])
    series = asym = None
    s_err = a_err = math.inf
    if abs(z) ** (1.0 / params.p) <= _SERIES_EXPONENT_CAP:
        try:
            v, e = _series_derivative(arr, params.p, params.beta, m, params.series_tol)
            series, s_err = complex(v[0]), float(e[0])
        except NonConvergence:
            pass
    if z != 0:
        v, e = _asymptotic_derivative(arr, params.p, params.beta, m)
        asym, a_err = complex(v[0]), float(e[0])
    value, _, branch = _dispatch(arr, params.p, params.beta, m, params.switch_radius)
    return BranchValues(series, s_err, asym, a_err, str(branch[0]), complex(value[0]))


def _check_sector(lam: complex, p: float, want_unstable: bool) -> None:
    angle = abs(math.atan2(lam.imag, lam.real))
    unstable = angle <= p * math.pi / 2
    if lam == 0:
        raise DomainError("lambda must be non-zero")
    if unstable != want_unstable:
        side = "unstable" if want_unstable else "stable"
        raise SectorError(
            f"|arg lambda| = {angle:.6g} is not in the {side} sector for p = {p}"
        )


def ml_asymptotic_unstable(params: MLParams, t: float, lam) -> complex:
    """Exponential leading term plus ``q`` algebraic terms of
    ``E_{p,beta}(t^p lambda)`` for ``|arg lambda| <= p pi / 2``."""
    lam = check_complex(lam, "lambda")
    t = check_positive(t, "t")
    _check_sector(lam, params.p, True)
    z = np.array([t**params.p * lam])
    v, _ = _asymptotic_derivative(z, params.p, params.beta, 0, params.q)
    return complex(v[0])


def ml_asymptotic_stable(params: MLParams, t: float, lam) -> complex:
    """The ``q`` algebraic terms of ``E_{p,beta}(t^p lambda)`` for
    ``|arg lambda| > p pi / 2``; no exponential term."""
    lam = check_complex(lam, "lambda")
    t = check_positive(t, "t")
    _check_sector(lam, params.p, False)
    z = np.array([t**params.p * lam])
    v, _ = _asymptotic_derivative(z, params.p, params.beta, 0, params.q, include_exp=False)
    return complex(v[0])


def ml_lambda_derivative(params: MLParams, t: float, lam, m: int) -> complex:
    """``(1/m!) d^m/dlambda^m E_{p,beta}(t^p lambda)``."""
    t = check_positive(t, "t", strict=False)
    lam = check_complex(lam, "lambda")
    m = check_int(m, "m", 0)
    if t == 0.0:
        return complex(rgamma(params.beta)) if m == 0 else 0j
    z = np.array([t**params.p * lam])
    v, _, _ = _dispatch(z, params.p, params.beta, m, params.switch_radius)
    return complex(v[0]) * t ** (params.p * m)


# ---------------------------------------------------------------------------
# algebraic remainder via the real-line integral representation


def ml_remainder_derivatives(z, p: float, beta: float, m_max: int = 0) -> np.ndarray:
    """``(1/m!) d^m/dz^m [E_{p,beta}(z) - (1/p) z^((1-beta)/p) exp(z^(1/p))]``.

    Valid off the rays ``|arg z| = p pi``.  Where the exponential part is
    moderate the difference is formed directly; elsewhere, for
    ``beta < 1 + p``, the remainder is the integral of

    ``chi^((1-beta)/p) exp(-chi^(1/p)) (chi sin(pi(1-beta)) - z sin(pi(1-beta+p)))
    / (p pi (chi^2 - 2 chi z cos(p pi) + z^2))``

    over ``chi in (0, inf)``, differentiated in ``z`` through its partial
    fractions.  Larger ``beta`` is lowered with
    ``R_beta(z) = (R_{beta-p}(z) - 1/Gamma(beta-p)) / z``, which the
    exponential parts satisfy as well.  Returns shape ``(m_max+1, *z.shape)``.
    """
    p = check_order(p)
    beta = check_positive(beta, "beta")
    z = np.asarray(z, dtype=complex)
    flat = z.ravel()
    if np.any(np.abs(np.abs(np.angle(flat[flat != 0])) - p * math.pi) <= _BOUNDARY_GAP):
        raise SectorError("remainder representation is singular on |arg z| = p*pi")
    out = np.zeros((m_max + 1, flat.size), dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_real = np.where(flat != 0, np.real(np.exp(np.log(flat) / p)), 0.0)
    direct = w_real <= 2.0
    if direct.any():
        for m in range(m_max + 1):
            full, _, _ = _dispatch(flat[direct], p, beta, m, None)
            out[m, direct] = full - _exp_part(flat[direct], p, beta, m)
    idx = np.flatnonzero(~direct)
    if idx.size:
        out[:, idx] = _lowered_remainder(flat[idx], p, beta, m_max)
    return out.reshape((m_max + 1,) + z.shape)


def _lowered_remainder(z, p, beta, m_max):
    if beta < 1 + p:
        return _remainder_integral(z, p, beta, m_max)
    low = _lowered_remainder(z, p, beta - p, m_max)
    out = np.empty_like(low)
    # z D_m R_b + D_{m-1} R_b = D_m R_{b-p} - delta_m0 / Gamma(b-p)
    out[0] = (low[0] - reciprocal_gamma(beta - p)) / z
    for m in range(1, m_max + 1):
        out[m] = (low[m] - out[m - 1]) / z
    return out


def _remainder_integral(z, p, beta, m_max, tilt: float = 0.0):
    s1 = math.sin(math.pi * (1 - beta))
    s2 = math.sin(math.pi * (1 - beta + p))
    ea = complex(math.cos(math.pi * p), math.sin(math.pi * p))
    eb = ea.conjugate()
    two_i_sin = 2j * math.sin(math.pi * p)
    ca = (s1 - ea * s2) / two_i_sin
    cb = -(s1 - eb * s2) / two_i_sin
    orders = np.arange(m_max + 1)[:, None]
    sign = (-1.0) ** orders
    n = z.size

    rot = complex(math.cos(tilt), math.sin(tilt))
    # chi = r e^(i tilt); for a = (1-beta)/p in (-1, 0) the endpoint factor r^a
    # is unbounded and r = u^gam with gam = 1/(1+a) turns r^a dr into gam du.
    # For a >= 0 a substitution would only move the kink into the pole terms.
    a = (1 - beta) / p
    gam = 1 / (1 + a) if a < 0 else 1.0
    power = gam * (1 + a) - 1
    lead = gam * rot * complex(math.cos(a * tilt), math.sin(a * tilt)) / (p * math.pi)
    spin = complex(math.cos(tilt / p), math.sin(tilt / p))

    def integrand(u):
        r = u**gam
        decay = r ** (1 / p)
        if decay * spin.real > 745.0:
            return np.zeros(2 * (m_max + 1) * n)
        weight = lead * u**power * np.exp(-decay * spin)
        chi = r * rot
        da = z[None, :] - chi * ea
        db = z[None, :] - chi * eb
        val = weight * sign * (ca / da ** (orders + 1) + cb / db ** (orders + 1))
        return np.concatenate([val.real.ravel(), val.imag.ravel()])

    # |weight| < e^-40 beyond u_end; a finite range keeps the oscillating
    # tilted integrand away from quad_vec's mapping of [0, inf)
    u_end = (40.0 / spin.real) ** (p / gam)
    res, _ = quad_vec(integrand, 0.0, u_end, epsabs=1e-14, epsrel=1e-13, norm="max", limit=20000)
    half = res.size // 2
    return (res[:half] + 1j * res[half:]).reshape(m_max + 1, n)
