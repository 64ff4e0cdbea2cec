"""Fixed-point construction of the local stable manifold.

For ``D^p x = A x + f(x)`` the decaying solutions starting over a stable
vector ``sigma`` are the fixed points of

    pi_s (T x)(t) = E_p(t^p A) sigma + int_0^t (t-s)^(p-1) E_{p,p}((t-s)^p A) pi_s f(x(s)) ds
    pi_u (T x)(t) = E_p(t^p A) sigma* + int_0^t (t-s)^(p-1) E_{p,p}((t-s)^p A) pi_u f(x(s)) ds
    sigma*        = int_0^inf (p/s) B~(-s) pi_u f(x(s)) ds.

Evaluated literally the unstable line subtracts two quantities growing like
``exp(t alpha)``.  Using ``B(t) (p/s) B~(-s) = -B~(t-s)/(t-s)`` the growing
parts cancel analytically and, with ``g = pi_u f(x)``,

    pi_u (T x)(t) = (1/p) int_0^inf W(s) g(t+s) ds + R_1(t) sigma*
                    + int_0^t (t-s)^(p-1) Q(t-s) g(s) ds,

where ``W(s) = (p/s) B~(-s)``, ``R_1 = E_p(t^p J) - B(t)`` and
``Q = E_{p,p}(t^p J) - t^-p B~(t)`` are all bounded.  That is the form used
here.  All work happens in Jordan coordinates ``y = P^-1 x``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import convolve
from scipy.special import factorial, poch

from ._validation import check_int, check_positive, check_vector
from .exceptions import (
    DivergedTrajectory,
    FracManifoldError,
    InvalidInputError,
    NoContraction,
    TailNotDecaying,
)
from .jordan import JordanSystem
from .matrix_ml import matrix_ml_rows, remainder_rows, scaled_psi_tilde_neg
from .quadrature import moment_convolution, panel_nodes, product_trapezoid_convolution
from .spectral import UNSTABLE, SpectralSplit

MAX_TAIL_CUT = 1e4
DIVERGENCE_FACTOR = 1e3
CONTRACTION_LIMIT = 0.95
CONTRACTION_PATIENCE = 3


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class TrajectoryGrid:
    """Samples ``values[k] ~ x(k * step)``, ``k = 0..K``."""

    step: float
    values: np.ndarray

    def __post_init__(self):
        check_positive(self.step, "step")
        vals = np.asarray(self.values)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] < 17:
            raise InvalidInputError("a trajectory grid needs shape (K+1, n) with K >= 16")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("trajectory contains non-finite values")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def K(self) -> int:
        return self.values.shape[0] - 1

    @property
    def horizon(self) -> float:
        return self.K * self.step

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.K + 1) * self.step

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


class VectorField:
    """Nonlinearity ``f`` with ``f(0) = 0`` and a sampled Lipschitz estimate.

    ``func`` must accept an array of shape ``(..., n)`` and return the same
    shape.  ``lipschitz_estimate`` is the largest difference quotient over
    ``n_pairs`` random point pairs in the ball of radius
    ``lipschitz_radius`` (seeded, so reproducible).
    """

    def __init__(
        self,
        func: Callable[[np.ndarray], np.ndarray],
        n: int,
        *,
        lipschitz_radius: float = 0.5,
        name: str = "custom",
        n_pairs: int = 1000,
        seed: int = 0,
    ):
        self.func = func
        self.n = check_int(n, "n", 1)
        self.lipschitz_radius = check_positive(lipschitz_radius, "lipschitz_radius")
        self.name = name
        f0 = np.asarray(func(np.zeros(self.n)), dtype=float)
        if f0.shape != (self.n,):
            raise InvalidInputError(f"f must map R^{self.n} to R^{self.n}, got shape {f0.shape}")
        if np.max(np.abs(f0)) > 1e-14:
            raise InvalidInputError("f(0) must vanish (equilibrium at the origin)")
        self.lipschitz_estimate = self._estimate_lipschitz(n_pairs, seed)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(x))

    def _estimate_lipschitz(self, n_pairs: int, seed: int) -> float:
        rng = np.random.default_rng(seed)

        def ball(k):
            d = rng.normal(size=(k, self.n))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            return d * self.lipschitz_radius * rng.uniform(size=(k, 1)) ** (1 / self.n)

        a, b = ball(n_pairs), ball(n_pairs)
        num = np.linalg.norm(self(a) - self(b), axis=1)
        den = np.linalg.norm(a - b, axis=1)
        return float(np.max(num / np.maximum(den, 1e-300)))

    @classmethod
    def zero(cls, n: int, **kw) -> VectorField:
        return cls(lambda x: np.zeros_like(np.asarray(x, dtype=float)), n, name="zero", **kw)

    @classmethod
    def polynomial(cls, terms: Sequence[Sequence[tuple[float, Sequence[int]]]], **kw) -> VectorField:
        """``terms[i]`` lists ``(coefficient, exponents)`` monomials of ``f_i``."""
        n = len(terms)
        parsed = []
        for i, comp in enumerate(terms):
            mons = []
            for coef, expo in comp:
                expo = tuple(int(e) for e in expo)
                if len(expo) != n or min(expo, default=0) < 0:
                    raise InvalidInputError(f"bad exponent tuple {expo} in component {i}")
                if sum(expo) == 0 and coef != 0:
                    raise InvalidInputError("constant terms violate f(0) = 0")
                mons.append((float(coef), expo))
            parsed.append(mons)

        def func(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for i, mons in enumerate(parsed):
                for coef, expo in mons:
                    term = np.full(x.shape[:-1], coef)
                    for j, e in enumerate(expo):
                        if e:
                            term = term * x[..., j] ** e
                    out[..., i] += term
            return out

        kw.setdefault("name", "polynomial")
        return cls(func, n, **kw)


@dataclass(frozen=True)
class QuadratureSpec:
    """Grid and quadrature settings.

    ``richardson_levels`` grids with steps ``step, step/2, ...`` are solved
    by :func:`solve_extrapolated` and their ``sigma_u`` combined.  The
    operator integrates its singular kernels exactly against the
    piecewise-linear interpolant of ``f(x)``; with solutions behaving like
    sums of ``t^(j + k p)`` the error then expands in the powers
    ``h^(1+p), h^2, ...``, which the combination removes one at a time.
    (Interpolating the kernel as well, as :func:`singular_convolution`
    does, adds an ``h^(2p)`` term from the kernel's ``x^p`` part.)

    The grid covers ``[0, horizon + tail_cut]``: ``horizon`` is the window on
    which the trajectory is reported and checked, ``tail_cut`` the extra
    length after which ``f(x(.))`` is taken as zero inside the improper
    integral.  ``tail_cut=None`` picks the smallest length whose
    exponential envelope falls below ``tol``.
    """

    step: float = 0.02
    horizon: float = 8.0
    tail_cut: float | None = None
    tol: float = 1e-10
    gl_order: int = 8
    richardson_levels: int = 3
    singular_scheme: str = "product-trapezoid"
    tail_scheme: str = "gauss-legendre"

    def __post_init__(self):
        check_positive(self.step, "step")
        check_positive(self.horizon, "horizon")
        if self.tail_cut is not None:
            check_positive(self.tail_cut, "tail_cut", strict=False)
        tol = check_positive(self.tol, "tol")
        if tol >= 1:
            raise InvalidInputError("tol must be < 1")
        check_int(self.gl_order, "gl_order", 2)
        check_int(self.richardson_levels, "richardson_levels", 1)
        if self.singular_scheme != "product-trapezoid":
            raise InvalidInputError("only the product-trapezoid singular scheme is implemented")
        if self.tail_scheme != "gauss-legendre":
            raise InvalidInputError("only the Gauss-Legendre tail scheme is implemented")


@dataclass
class ManifoldResult:
    sigma_s: np.ndarray
    sigma_u: np.ndarray
    trajectory: TrajectoryGrid
    iterations: int
    final_delta: float
    converged: bool
    update_ratios: list = field(default_factory=list)
    observation_horizon: float = math.nan
    sigma_u_levels: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# envelope and tail length


def tail_envelope(system: JordanSystem, alpha: float, t) -> np.ndarray:
    """``sum_m t^(m+1) exp(-alpha t) / p^(m+1)`` over the largest unstable block,
    with ``max(1, |lambda|^(1/p))`` standing in for the block constant."""
    t = np.asarray(t, dtype=float)
    unstable = [b for b in system.blocks if b.klass == UNSTABLE]
    if not unstable:
        return np.zeros_like(t)
    n_max = max(b.size for b in unstable)
    scale = max(max(1.0, abs(b.lam) ** (1 / system.p)) for b in unstable)
    p = system.p
    total = sum(t ** (m + 1) / p ** (m + 1) for m in range(n_max))
    return scale * total * np.exp(-alpha * t)


def certify_tail_cut(system: JordanSystem, alpha: float, tol: float, g_bound=None) -> float:
    """Smallest ``T`` (on a doubling-then-bisection search) where
    ``envelope(T) * T * max(1, |g(T)|) < tol``; ``g_bound`` is an optional
    callable bound on ``|g|``."""
    if not math.isfinite(alpha):
        return 0.0

    def bad(T):
        gb = 1.0 if g_bound is None else max(1.0, float(g_bound(T)))
        return tail_envelope(system, alpha, T) * max(T, 1.0) * gb >= tol

    hi = 1.0 / alpha
    while bad(hi):
        hi *= 2
        if hi > MAX_TAIL_CUT:
            raise TailNotDecaying(f"tail envelope stays above tol={tol} up to T={MAX_TAIL_CUT}")
    lo = hi / 2
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if bad(mid):
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# Toeplitz helpers (first-row storage)


def _toeplitz_apply(rows: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``out[..., i] = sum_{c >= i} rows[..., c - i] v[..., c]``."""
    nb = rows.shape[-1]
    out = np.zeros(np.broadcast_shapes(rows.shape, v.shape), dtype=complex)
    for i in range(nb):
        for c in range(i, nb):
            out[..., i] += rows[..., c - i] * v[..., c]
    return out


def _toeplitz_convolution(rows: np.ndarray, g: np.ndarray, p: float, h: float) -> np.ndarray:
    nb = rows.shape[-1]
    out = np.zeros(g.shape, dtype=complex)
    for d in range(nb):
        conv = product_trapezoid_convolution(rows[:, d], g[:, d:], p, h)
        out[:, : nb - d] += conv
    return out


def _binom(a: float, m: np.ndarray) -> np.ndarray:
    """``a (a-1) ... (a-m+1) / m!`` for any real ``a``."""
    return (-1.0) ** m * poch(-a, m) / factorial(m)


def _kernel_moments(system: JordanSystem, times: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Antiderivatives of ``x^(p-1) Q(x)`` and ``x^p Q(x)`` per block, where
    ``Q`` is ``E_{p,p}(x^p J)`` (stable) or its remainder (unstable).

    ``int_0^x s^(p-1) E_{p,p}(lam s^p) ds = x^p E_{p,p+1}(lam x^p)`` and one
    more integration by parts gives ``x^(p+1) (E_{p,p+1} - E_{p,p+2})``; the
    exponential parts of the three functions match, so the same identities
    hold for the remainders up to constants, fixed here by the value at 0.
    """
    p = system.p
    x = times[1:]
    a = remainder_rows(system, p + 1, x)
    b = remainder_rows(system, p + 2, x)
    out = []
    for blk, ra, rb in zip(system.blocks, a, b):
        m = np.arange(blk.size)
        M0 = np.zeros((times.size, blk.size), dtype=complex)
        M1 = np.zeros_like(M0)
        M0[1:] = x[:, None] ** p * ra
        M1[1:] = x[:, None] ** (p + 1) * (ra - rb)
        if blk.klass == UNSTABLE:
            # removed parts integrate to (e^{mu x} - 1) / (p lam) and its
            # primitive; their lam-derivatives at x = 0
            lam = complex(blk.lam)
            M0[0] = -_binom(-1.0, m) * lam ** (-1.0 - m) / p
            M1[0] = _binom(-1.0 - 1.0 / p, m) * lam ** (-1.0 - 1.0 / p - m) / p
        out.append((M0, M1))
    return out


def _moment_toeplitz_convolution(M0: np.ndarray, M1: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    nb = M0.shape[-1]
    out = np.zeros(g.shape, dtype=complex)
    for d in range(nb):
        out[:, : nb - d] += moment_convolution(M0[:, d], M1[:, d], g[:, d:], h)
    return out


# ---------------------------------------------------------------------------
# operator


class ManifoldOperator:
    """Precomputed kernels of ``T_sigma`` on a fixed grid (immutable, so it
    may be shared between threads)."""

    def __init__(self, system: JordanSystem, split: SpectralSplit, f: VectorField, spec: QuadratureSpec):
        if f.n != system.dimension:
            raise InvalidInputError(f"f acts on R^{f.n} but the system has dimension {system.dimension}")
        self.system, self.split, self.f, self.spec = system, split, f, spec
        p = system.p
        self.p = p
        self.s = system.stable_dim
        self.h = spec.step
        if spec.tail_cut is None:
            self.tail_cut = certify_tail_cut(system, split.alpha, spec.tol)
        else:
            self.tail_cut = spec.tail_cut
        total = spec.horizon + self.tail_cut
        self.K = max(16, int(math.ceil(total / self.h - 1e-9)))
        self.observation_horizon = spec.horizon
        times = np.arange(self.K + 1) * self.h
        self.times = times

        blocks = system.blocks
        self._slices = [slice(lo, lo + b.size) for b, lo in zip(blocks, system.offsets)]
        # stable blocks: full E_p; unstable: remainders.  The singular
        # kernels enter through their antiderivatives
        e1 = matrix_ml_rows(system, 1.0, times, stable_only=True)
        unstable = [i for i, b in enumerate(blocks) if b.klass == UNSTABLE]
        r1 = remainder_rows(system, 1.0, times) if unstable else None
        moments = _kernel_moments(system, times)
        self._stable = []
        self._unstable = []
        for i, (b, sl) in enumerate(zip(blocks, self._slices)):
            if b.klass == UNSTABLE:
                A_pan, C_pan = self._panel_weights(b.lam, b.size)
                hat = A_pan.copy()
                hat[1:] += C_pan[:-1]
                self._unstable.append((sl, r1[i], moments[i], hat, A_pan))
            else:
                self._stable.append((sl, e1[i], moments[i]))

    def _panel_weights(self, lam, size):
        """Integrals of ``W(s) (1-u)`` and ``W(s) u`` over each panel
        ``[k h, (k+1) h]``, ``u`` the local coordinate; shape ``(K+1, size)``."""
        edges = np.arange(self.K + 2) * self.h
        nodes, wts = panel_nodes(edges, self.spec.gl_order)
        u = (nodes - edges[:-1, None]) / self.h
        A = np.zeros((self.K + 1, size), dtype=complex)
        C = np.zeros_like(A)
        for m in range(size):
            W = scaled_psi_tilde_neg(self.p, nodes, lam, m)
            A[:, m] = np.sum(W * (1 - u) * wts, axis=1)
            C[:, m] = np.sum(W * u * wts, axis=1)
        return A, C

    # coordinate changes
    def to_jordan(self, x: np.ndarray) -> np.ndarray:
        return x @ self.system.transform_inv.T

    def to_original(self, y: np.ndarray) -> np.ndarray:
        x = y @ self.system.transform.T
        return x.real if self.system.is_real else x

    def stable_coordinates(self, sigma_s: np.ndarray) -> np.ndarray:
        return self.to_jordan(np.asarray(sigma_s, dtype=complex))

    def tail_correlation(self, g_u: np.ndarray, hat: np.ndarray, A_pan: np.ndarray) -> np.ndarray:
        """``S[k] = int_0^inf W(s) g(t_k + s) ds`` with ``g`` piecewise linear on
        the grid and zero past the last node; Toeplitz in the block index."""
        K = self.K
        nb = hat.shape[1]
        S = np.zeros(g_u.shape, dtype=complex)
        for d in range(nb):
            ker = hat[::-1, d]
            for c in range(d, nb):
                full = convolve(g_u[:, c], ker)
                S[:, c - d] += full[K : 2 * K + 1] - A_pan[K - np.arange(K + 1), d] * g_u[K, c]
        return S

    def linear_flow(self, sigma_s: np.ndarray) -> np.ndarray:
        """Jordan-coordinate samples of ``E_p(t^p A) sigma``."""
        y0 = self.stable_coordinates(sigma_s)
        y = np.zeros((self.K + 1, self.system.dimension), dtype=complex)
        for sl, e1, _ in self._stable:
            y[:, sl] = _toeplitz_apply(e1, y0[sl][None, :])
        return y

    def apply(self, sigma_s: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One application of ``T_sigma``; returns ``(y_new, sigma_star)`` in
        Jordan coordinates."""
        x = self.to_original(y)
        g = self.to_jordan(self.f(x))
        out = self.linear_flow(sigma_s)
        sigma_star = np.zeros(self.system.dimension, dtype=complex)
        for sl, _, (M0, M1) in self._stable:
            out[:, sl] += _moment_toeplitz_convolution(M0, M1, g[:, sl], self.h)
        for sl, r1, (M0, M1), hat, A_pan in self._unstable:
            S = self.tail_correlation(g[:, sl], hat, A_pan)
            star = S[0]
            sigma_star[sl] = star
            out[:, sl] = (
                S / self.p
                + _toeplitz_apply(r1, star[None, :])
                + _moment_toeplitz_convolution(M0, M1, g[:, sl], self.h)
            )
        return out, sigma_star


# ---------------------------------------------------------------------------
# public operations


def _validate_sigma(sigma_s, system: JordanSystem, split: SpectralSplit) -> np.ndarray:
    sigma = check_vector(sigma_s, system.dimension, "sigma_s")
    leak = np.max(np.abs(split.pi_u @ sigma))
    if leak > 1e-12 * (1 + np.max(np.abs(sigma))):
        raise InvalidInputError(f"sigma_s has an unstable component of size {leak:.3g}")
    return sigma


def tail_integral(system: JordanSystem, split: SpectralSplit, g, spec: QuadratureSpec) -> np.ndarray:
    """``sigma* = int_0^inf (p/s) B~(-s) pi_u g(s) ds`` in original coordinates.

    ``g`` is either a vectorised callable ``s -> (len(s), n)`` or a
    :class:`TrajectoryGrid` / ``(K+1, n)`` array sampled with ``spec.step``
    (taken as zero past its last node).
    """
    n = system.dimension
    P, P_inv = system.transform, system.transform_inv
    unstable = [(b, lo) for b, lo in zip(system.blocks, system.offsets) if b.klass == UNSTABLE]
    if not unstable:
        return np.zeros(n)
    if callable(g):
        def bound(T):
            return np.max(np.abs(np.asarray(g(np.array([T])), dtype=complex)))

        T = spec.tail_cut if spec.tail_cut is not None else certify_tail_cut(
            system, split.alpha, spec.tol, bound
        )
        n_panels = max(8, int(math.ceil(T * max(split.alpha, 1.0) * 2)))
        nodes, wts = panel_nodes(np.linspace(0.0, T, n_panels + 1), spec.gl_order)
        s = nodes.ravel()
        gj = np.asarray(g(s), dtype=complex).reshape(s.size, n) @ P_inv.T
        out = np.zeros(n, dtype=complex)
        for b, lo in unstable:
            for i in range(b.size):
                for c in range(i, b.size):
                    W = scaled_psi_tilde_neg(system.p, s, b.lam, c - i)
                    out[lo + i] += np.sum(wts.ravel() * W * gj[:, lo + c])
    else:
        vals = g.values if isinstance(g, TrajectoryGrid) else np.asarray(g)
        if vals.ndim != 2 or vals.shape[1] != n:
            raise InvalidInputError(f"sampled g must have shape (K+1, {n})")
        op = _TailOnly(system, spec, vals.shape[0] - 1)
        gj = np.asarray(vals, dtype=complex) @ P_inv.T
        out = np.zeros(n, dtype=complex)
        for b, lo, hat, A_pan in op.blocks:
            sl = slice(lo, lo + b.size)
            for i in range(b.size):
                for c in range(i, b.size):
                    out[lo + i] += np.sum(hat[:, c - i] * gj[:, lo + c]) - A_pan[-1, c - i] * gj[-1, lo + c]
    x = P @ out
    return x.real if system.is_real else x


class _TailOnly:
    """Panel weights of ``W`` on a grid, without the rest of the operator."""

    def __init__(self, system, spec, K):
        self.blocks = []
        holder = ManifoldOperator.__new__(ManifoldOperator)
        holder.K, holder.h, holder.p, holder.spec = K, spec.step, system.p, spec
        for b, lo in zip(system.blocks, system.offsets):
            if b.klass == UNSTABLE:
                A_pan, C_pan = ManifoldOperator._panel_weights(holder, b.lam, b.size)
                hat = A_pan.copy()
                hat[1:] += C_pan[:-1]
                self.blocks.append((b, lo, hat, A_pan))


def singular_convolution(system: JordanSystem, beta: float, t: float, g, spec: QuadratureSpec) -> np.ndarray:
    """``int_0^t (t-s)^(p-1) E_{p,beta}((t-s)^p A) g(s) ds`` by product
    integration; ``g`` is sampled on the grid ``k * spec.step`` up to ``t``."""
    vals = g.values if isinstance(g, TrajectoryGrid) else np.asarray(g, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    h = spec.step
    k = int(round(t / h))
    if abs(k * h - t) > 1e-9 * max(1.0, t) or k >= vals.shape[0] or k < 0:
        raise InvalidInputError("t must be a grid node inside the sampled range of g")
    if k == 0:
        return np.zeros(system.dimension)
    times = np.arange(k + 1) * h
    rows = matrix_ml_rows(system, beta, times)
    gj = vals[: k + 1].astype(complex) @ system.transform_inv.T
    out = np.zeros(system.dimension, dtype=complex)
    for r, b, lo in zip(rows, system.blocks, system.offsets):
        sl = slice(lo, lo + b.size)
        out[sl] = _toeplitz_convolution(r, gj[:, sl], system.p, h)[k]
    x = system.transform @ out
    return x.real if system.is_real else x


def build_operator(system, split, f, spec) -> ManifoldOperator:
    return ManifoldOperator(system, split, f, spec)


def _check_bounded(y: np.ndarray, op: ManifoldOperator) -> None:
    limit = DIVERGENCE_FACTOR * op.f.lipschitz_radius
    peak = np.max(np.abs(y))
    if not np.isfinite(peak) or peak > limit:
        raise DivergedTrajectory(f"iterate reached |x| = {peak:.3g} > {limit:.3g}")


def apply_T_sigma(sigma_s, x: TrajectoryGrid, system, split, f, spec, *, operator=None) -> TrajectoryGrid:
    """One application of the operator to a sampled trajectory."""
    op = operator or build_operator(system, split, f, spec)
    sigma = _validate_sigma(sigma_s, system, split)
    if x.values.shape != (op.K + 1, system.dimension) or abs(x.step - op.h) > 1e-15:
        raise InvalidInputError(f"x must be sampled on the operator grid ({op.K + 1} nodes, step {op.h})")
    y_new, _ = op.apply(sigma, op.to_jordan(x.values.astype(complex)))
    _check_bounded(y_new, op)
    return TrajectoryGrid(op.h, op.to_original(y_new))


def solve_fixed_point(
    sigma_s,
    system: JordanSystem,
    split: SpectralSplit,
    f: VectorField,
    spec: QuadratureSpec,
    max_iter: int = 50,
    tol: float = 1e-8,
    *,
    operator: ManifoldOperator | None = None,
) -> ManifoldResult:
    """Picard iteration ``x <- T_sigma x`` from the linear flow."""
    op = operator or build_operator(system, split, f, spec)
    sigma = _validate_sigma(sigma_s, system, split)
    max_iter = check_int(max_iter, "max_iter", 1)
    tol = check_positive(tol, "tol")
    y = op.linear_flow(sigma)
    ratios: list[float] = []
    prev = None
    delta = math.inf
    streak = 0
    it = 0
    for it in range(1, max_iter + 1):
        y_new, star = op.apply(sigma, y)
        _check_bounded(y_new, op)
        delta = float(np.max(np.abs(op.to_original(y_new) - op.to_original(y))))
        y = y_new
        if prev is not None and prev > 0:
            ratio = delta / prev
            ratios.append(ratio)
            streak = streak + 1 if ratio > CONTRACTION_LIMIT else 0
            if streak >= CONTRACTION_PATIENCE:
                raise NoContraction(
                    f"update ratio above {CONTRACTION_LIMIT} for {CONTRACTION_PATIENCE} iterations "
                    f"(last {ratio:.3g}); sigma_s is outside the contraction region"
                )
        prev = delta
        if delta < tol:
            break
    x = op.to_original(y)
    sigma_u = split.pi_u @ x[0]
    return ManifoldResult(
        sigma_s=sigma,
        sigma_u=sigma_u,
        trajectory=TrajectoryGrid(op.h, x),
        iterations=it,
        final_delta=delta,
        converged=delta < tol,
        update_ratios=ratios,
        observation_horizon=op.observation_horizon,
    )


def error_exponents(p: float, count: int) -> list[float]:
    """The smallest ``count`` distinct powers ``j + k p > 1`` (``j >= 1``, ``k >= 0``)."""
    cands = sorted({round(j + k * p, 12) for j in range(1, count + 3) for k in range(0, count + 3)})
    return [c for c in cands if c > 1 + 1e-12][:count]


def richardson(values: Sequence[np.ndarray], p: float) -> np.ndarray:
    """Combine results on steps ``h, h/2, h/4, ...`` (coarsest first)."""
    vals = [np.asarray(v) for v in values]
    for e in error_exponents(p, len(vals) - 1):
        r = 2.0**e
        vals = [(r * vals[i + 1] - vals[i]) / (r - 1) for i in range(len(vals) - 1)]
    return vals[0]


def build_operators(system, split, f, spec) -> list[ManifoldOperator]:
    """One operator per Richardson level, coarsest first."""
    ops = []
    for j in range(spec.richardson_levels):
        level = QuadratureSpec(
            step=spec.step / 2**j,
            horizon=spec.horizon,
            tail_cut=spec.tail_cut,
            tol=spec.tol,
            gl_order=spec.gl_order,
            richardson_levels=1,
        )
        ops.append(ManifoldOperator(system, split, f, level))
    return ops


def solve_extrapolated(
    sigma_s,
    system: JordanSystem,
    split: SpectralSplit,
    f: VectorField,
    spec: QuadratureSpec,
    max_iter: int = 50,
    tol: float = 1e-8,
    *,
    operators: Sequence[ManifoldOperator] | None = None,
) -> ManifoldResult:
    """:func:`solve_fixed_point` on every Richardson level; the returned
    result carries the finest trajectory and the extrapolated ``sigma_u``."""
    ops = list(operators) if operators is not None else build_operators(system, split, f, spec)
    results = [solve_fixed_point(sigma_s, system, split, f, spec, max_iter, tol, operator=op) for op in ops]
    fine = results[-1]
    levels = [r.sigma_u for r in results]
    fine.sigma_u_levels = levels
    fine.sigma_u = richardson(levels, system.p) if len(levels) > 1 else levels[0]
    fine.converged = all(r.converged for r in results)
    fine.iterations = max(r.iterations for r in results)
    return fine


@dataclass
class MapSample:
    sigma_s: np.ndarray
    sigma_u: np.ndarray | None
    result: ManifoldResult | None
    error: str | None = None


def manifold_map(
    system: JordanSystem,
    split: SpectralSplit,
    f: VectorField,
    spec: QuadratureSpec,
    samples,
    *,
    jobs: int = 1,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> list[MapSample]:
    """Solve the (extrapolated) fixed point for every stable vector in
    ``samples``.  Failures are recorded per sample; the batch continues.
    """
    ops = build_operators(system, split, f, spec)
    jobs = check_int(jobs, "jobs", 1)

    def one(sig):
        sig = np.asarray(sig, dtype=float)
        try:
            res = solve_extrapolated(sig, system, split, f, spec, max_iter, tol, operators=ops)
            return MapSample(sig, res.sigma_u, res)
        except FracManifoldError as exc:
            return MapSample(sig, None, None, f"{type(exc).__name__}: {exc}")

    samples = list(samples)
    if jobs == 1:
        return [one(s) for s in samples]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, samples))


@dataclass(frozen=True)
class DecayReport:
    peak: float
    trailing_max: float
    ratio: float
    fraction: float
    decay_slope: float
    passed: bool


def unstable_decay_report(times, values, pi_u, window_end: float | None = None, fraction: float = 0.1) -> DecayReport:
    """Compare the trailing-quarter max of ``|pi_u x(t)|`` with its peak."""
    times = np.asarray(times)
    values = np.asarray(values)
    if window_end is not None:
        keep = times <= window_end + 1e-12
        times, values = times[keep], values[keep]
    norms = np.max(np.abs(values @ np.asarray(pi_u).T), axis=1)
    peak = float(np.max(norms))
    start = int(0.75 * (len(times) - 1))
    trailing = float(np.max(norms[start:]))
    if peak == 0.0:
        return DecayReport(0.0, 0.0, 0.0, fraction, math.nan, True)
    half = len(times) // 2
    tt, nn = times[half:], norms[half:]
    ok = (tt > 0) & (nn > 0)
    slope = float(np.polyfit(np.log(tt[ok]), np.log(nn[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
    ratio = trailing / peak
    return DecayReport(peak, trailing, ratio, fraction, slope, ratio < fraction)


def verify_unstable_decay(result: ManifoldResult, split: SpectralSplit, fraction: float = 0.1) -> DecayReport:
    """Trailing-window check of ``|pi_u x(t)|`` on ``[0, observation_horizon]``."""
    traj = result.trajectory
    end = result.observation_horizon if math.isfinite(result.observation_horizon) else None
    return unstable_decay_report(traj.times, traj.values, split.pi_u, end, fraction)
