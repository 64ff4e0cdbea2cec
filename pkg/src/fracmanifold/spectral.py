"""Stable/unstable classification and the spectral projections."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ._validation import check_complex, check_order
from .exceptions import DomainError, NonHyperbolic

if TYPE_CHECKING:  # pragma: no cover
    from .jordan import JordanSystem

STABLE = "stable"
UNSTABLE = "unstable"
BOUNDARY_TOL = 1e-12


def classify(lam, p: float) -> str:
    """``"stable"`` iff ``|arg lambda| > p*pi/2`` (Matignon sector)."""
    lam = check_complex(lam, "lambda")
    p = check_order(p, allow_one=True)
    if lam == 0:
        raise DomainError("lambda = 0 is not hyperbolic")
    angle = abs(math.atan2(lam.imag, lam.real))
    edge = p * math.pi / 2
    if abs(angle - edge) <= BOUNDARY_TOL:
        raise NonHyperbolic(
            f"|arg lambda| = {angle!r} lies on the sector boundary p*pi/2 = {edge!r}"
        )
    return STABLE if angle > edge else UNSTABLE


@dataclass(frozen=True)
class SpectralSplit:
    pi_s: np.ndarray
    pi_u: np.ndarray
    alpha: float
    stable_dim: int
    unstable_dim: int

    def project_stable(self, x: np.ndarray) -> np.ndarray:
        return x @ self.pi_s.T

    def project_unstable(self, x: np.ndarray) -> np.ndarray:
        return x @ self.pi_u.T


def build_split(system: JordanSystem) -> SpectralSplit:
    """Projections onto the stable/unstable generalized eigenspaces.

    ``alpha`` is the smallest ``Re(lambda^(1/p))`` over the unstable
    eigenvalues (``inf`` when there are none).
    """
    n = system.dimension
    s = system.stable_dim
    mask = np.zeros(n)
    mask[:s] = 1.0
    P, P_inv = system.transform, system.transform_inv
    pi_s = (P * mask) @ P_inv
    eye = np.eye(n)
    if system.is_real:
        pi_s = pi_s.real
    else:
        eye = eye.astype(complex)
    pi_u = eye - pi_s
    unstable = [b.lam for b in system.blocks if b.klass == UNSTABLE]
    if unstable:
        alpha = min((complex(lam) ** (1.0 / system.p)).real for lam in unstable)
    else:
        alpha = math.inf
    return SpectralSplit(pi_s, pi_u, float(alpha), s, n - s)
